/*
 * Copyright 2026 The stgsl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "stgsl/autodiff.hpp"

// Adjoints defined next to their forward kernels; gathered into the registry
// in autodiff.cpp.
namespace stgsl::detail {

#define STGSL_DECLARE_ADJOINT(fn)                                                       \
  void fn(const Node& node, const Tensor& grad_out, std::span<const Tensor* const> in, \
          std::span<Tensor* const> grads)

STGSL_DECLARE_ADJOINT(expand_symmetric_adjoint);
STGSL_DECLARE_ADJOINT(sparsify_adjoint);
STGSL_DECLARE_ADJOINT(gumbel_st_adjoint);
STGSL_DECLARE_ADJOINT(sparsity_loss_adjoint);

STGSL_DECLARE_ADJOINT(normalized_adjacency_adjoint);
STGSL_DECLARE_ADJOINT(spatial_conv_adjoint);
STGSL_DECLARE_ADJOINT(temporal_conv_adjoint);
STGSL_DECLARE_ADJOINT(temporal_max_pool_adjoint);
STGSL_DECLARE_ADJOINT(concat_channels_adjoint);
STGSL_DECLARE_ADJOINT(dropout_adjoint);
STGSL_DECLARE_ADJOINT(mean_pool_adjoint);
STGSL_DECLARE_ADJOINT(linear_adjoint);
STGSL_DECLARE_ADJOINT(bce_with_logits_adjoint);

}  // namespace stgsl::detail
