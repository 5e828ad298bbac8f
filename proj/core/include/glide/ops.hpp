#pragma once

#include "glide/ops_common.hpp"
#include "glide/ops_conv.hpp"
#include "glide/ops_linalg.hpp"
#include "glide/ops_loss.hpp"
#include "glide/ops_norm.hpp"
#include "glide/ops_pointwise.hpp"
#include "glide/ops_reduce.hpp"
