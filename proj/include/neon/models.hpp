#pragma once

#include "neon/models/deep.hpp"
#include "neon/models/kernel.hpp"
#include "neon/models/standard.hpp"
