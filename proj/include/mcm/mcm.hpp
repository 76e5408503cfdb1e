#pragma once

#include "mcm/adam.hpp"
#include "mcm/checkpoint.hpp"
#include "mcm/config.hpp"
#include "mcm/data.hpp"
#include "mcm/datagen.hpp"
#include "mcm/embedding.hpp"
#include "mcm/layers.hpp"
#include "mcm/metrics.hpp"
#include "mcm/model.hpp"
#include "mcm/rng.hpp"
#include "mcm/skipgram.hpp"
#include "mcm/tensor.hpp"
#include "mcm/train.hpp"
