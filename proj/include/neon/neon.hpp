#pragma once

#include "neon/baselines.hpp"
#include "neon/blobs.hpp"
#include "neon/dataset.hpp"
#include "neon/error.hpp"
#include "neon/evaluation.hpp"
#include "neon/io.hpp"
#include "neon/models.hpp"
#include "neon/network.hpp"
#include "neon/neuralize.hpp"
#include "neon/parallel.hpp"
#include "neon/pooling.hpp"
#include "neon/propagate.hpp"
