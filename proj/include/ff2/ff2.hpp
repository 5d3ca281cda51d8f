#pragma once

#include "ff2/attention.hpp"
#include "ff2/data.hpp"
#include "ff2/encoder.hpp"
#include "ff2/errors.hpp"
#include "ff2/eval.hpp"
#include "ff2/gradcheck.hpp"
#include "ff2/model.hpp"
#include "ff2/pipeline.hpp"
#include "ff2/rng.hpp"
#include "ff2/serialize.hpp"
#include "ff2/tensor.hpp"
#include "ff2/train.hpp"
