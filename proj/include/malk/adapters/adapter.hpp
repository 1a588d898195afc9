// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "malk/autodiff/grad_check.hpp"
#include "malk/autodiff/tape.hpp"
#include "malk/linalg/matrix.hpp"
#include "malk/moe/router.hpp"

namespace malk {

class Rng;

enum class Method { Lora, AsyLora, Molora, MoAsyLora, Malora };

std::string_view method_name(Method m) noexcept;
/// Throws ConfigError for unknown names.
Method parse_method(std::string_view name);
bool is_moe(Method m) noexcept;

/// Per-call forward options. dropout_rng may be null when dropout is off.
struct ForwardContext {
    ad::Tape& tape;
    bool training = false;
    Rng* dropout_rng = nullptr;
};

struct ForwardOutput {
    ad::Var y;
    std::optional<RouteResult> route;  // set by mixture layers
};

/// One fine-tunable linear site: frozen base weight (out x in) plus a
/// method-specific low-rank delta. Layers register their matrices on the
/// tape under "<prefix>.<name>" each forward pass.
class AdapterLayer {
public:
    AdapterLayer(Matrix base_w);
    virtual ~AdapterLayer() = default;

    virtual Method method() const noexcept = 0;
    virtual ForwardOutput forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) = 0;
    /// Adapter matrices (not the frozen base), with trainable flags.
    virtual std::vector<ad::ParamRef> params(const std::string& prefix) = 0;
    /// Dense delta of one expert (index ignored by single-expert layers),
    /// scale included.
    virtual Matrix merged_delta(std::size_t expert = 0) const = 0;
    virtual std::size_t experts() const noexcept { return 1; }

    std::size_t in_dim() const noexcept { return base_w_.cols(); }
    std::size_t out_dim() const noexcept { return base_w_.rows(); }
    const Matrix& base_weight() const noexcept { return base_w_; }

    /// x * W^T on the tape, using the cached transpose.
    ad::Var base_forward(ad::Var x) const;

private:
    Matrix base_w_;
    Matrix base_wt_;
};

}  // namespace malk
