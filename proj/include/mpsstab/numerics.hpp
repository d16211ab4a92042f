#pragma once

#include "mpsstab/core.hpp"
#include "mpsstab/eigensolver.hpp"
#include "mpsstab/linalg.hpp"
#include "mpsstab/product_space.hpp"
#include "mpsstab/random.hpp"
