#pragma once

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/baselines.hpp"
#include "meta_rdre/checkpoint.hpp"
#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/evalkit.hpp"
#include "meta_rdre/experiments.hpp"
#include "meta_rdre/gaussian.hpp"
#include "meta_rdre/model.hpp"
#include "meta_rdre/numgrad/linalg.hpp"
#include "meta_rdre/numgrad/ops.hpp"
#include "meta_rdre/numgrad/tape.hpp"
#include "meta_rdre/numgrad/tensor.hpp"
#include "meta_rdre/parallel.hpp"
#include "meta_rdre/rng.hpp"
#include "meta_rdre/train.hpp"
