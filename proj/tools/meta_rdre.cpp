#include "meta_rdre/cli/commands.hpp"

int main(int argc, char** argv) { return meta_rdre::cli::run(argc, argv); }
