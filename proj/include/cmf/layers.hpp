#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cmf/error.hpp"
#include "cmf/rng.hpp"
#include "cmf/tensor.hpp"

namespace cmf {

// Validity flags over sequence positions; 1 = real utterance, 0 = padding.
using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(std::size_t n) { return Mask(n, 1); }

inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> w(rows * cols);
  for (double& v : w) v = rng.uniform(-limit, limit);
  Tensor t = Tensor::from_data({rows, cols}, std::move(w));
  t.set_requires_grad(true);
  return t;
}

inline Tensor zeros_param(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

// ---------------------------------------------------------------------------
// Affine map
// ---------------------------------------------------------------------------

struct LinearLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, Rng& rng)
      : weight(xavier_uniform(out, in, rng)), bias(zeros_param({out})) {}

  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }

  // x [R x in] -> x W^T + b [R x out]
  Tensor forward(const Tensor& x) const {
    return add(matmul(x, transpose(weight)), bias);
  }

  void append_params(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

inline Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
  return layer.forward(x);
}

// ---------------------------------------------------------------------------
// Layer normalization
// ---------------------------------------------------------------------------

struct LayerNormParams {
  Tensor gamma;  // [d]
  Tensor beta;   // [d]
  double eps = 1e-5;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d, double eps_ = 1e-5)
      : gamma(Tensor::full({d}, 1.0)), beta(zeros_param({d})), eps(eps_) {
    gamma.set_requires_grad(true);
    if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive");
  }

  std::size_t dim() const { return gamma.shape()[0]; }

  void append_params(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

// Per-row standardization over the feature axis (population variance, eps
// inside the square root), followed by the gamma/beta affine map.
inline Tensor layer_norm(const LayerNormParams& params, const Tensor& x) {
  detail::require_2d(x, "layer_norm");
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  if (d != params.dim()) {
    throw ShapeError("layer_norm feature dim mismatch: x " +
                     detail::shape_str(x.shape()) + " vs params [" +
                     std::to_string(params.dim()) + "]");
  }
  const double eps = params.eps;
  const double inv_d = 1.0 / static_cast<double>(d);

  std::vector<double> out(rows * d);
  std::vector<double> xhat(rows * d);
  std::vector<double> inv_std(rows);
  const auto& px = x.data();
  const auto& g = params.gamma.data();
  const auto& b = params.beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += px[r * d + j];
    mu *= inv_d;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = px[r * d + j] - mu;
      var += c * c;
    }
    var *= inv_d;
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[r] = s;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (px[r * d + j] - mu) * s;
      xhat[r * d + j] = h;
      out[r * d + j] = g[j] * h + b[j];
    }
  }
  return detail::make_op(
      x.shape(), std::move(out), {x, params.gamma, params.beta},
      [rows, d, inv_d, xh = std::move(xhat),
       is = std::move(inv_std)](detail::Node& node) {
        auto& pxn = node.parents[0];
        auto& pg = node.parents[1];
        auto& pb = node.parents[2];
        const auto& gamma = pg->data;
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
              pb->grad[j] += node.grad[r * d + j];
        }
        if (pg->requires_grad) {
          pg->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
              pg->grad[j] += node.grad[r * d + j] * xh[r * d + j];
        }
        if (pxn->requires_grad) {
          pxn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            const double s = is[r];
            double sum_h = 0.0, sum_hx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double h = node.grad[r * d + j] * gamma[j];
              sum_h += h;
              sum_hx += h * xh[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double h = node.grad[r * d + j] * gamma[j];
              pxn->grad[r * d + j] +=
                  s * (h - inv_d * sum_h - inv_d * xh[r * d + j] * sum_hx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Gate blocks are packed in the order: input, forget, cell-candidate, output.
// The forget-gate bias block is initialized to 1.
struct LSTMCellParams {
  Tensor w_input;  // [4h x in]
  Tensor w_recur;  // [4h x h]
  Tensor bias;     // [4h]

  LSTMCellParams() = default;
  LSTMCellParams(std::size_t in, std::size_t hidden, Rng& rng)
      : w_input(xavier_uniform(4 * hidden, in, rng)),
        w_recur(xavier_uniform(4 * hidden, hidden, rng)),
        bias(zeros_param({4 * hidden})) {
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias.data()[j] = 1.0;
  }

  std::size_t hidden_dim() const { return w_recur.shape()[1]; }
  std::size_t in_dim() const { return w_input.shape()[1]; }

  void append_params(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".w_input", w_input);
    out.emplace_back(prefix + ".w_recur", w_recur);
    out.emplace_back(prefix + ".bias", bias);
  }
};

struct LSTMState {
  Tensor h;  // [1 x h]
  Tensor c;  // [1 x h]
};

namespace detail {

inline LSTMState lstm_step_pre(const LSTMCellParams& params, const Tensor& x_t,
                               const Tensor& wx_t, const Tensor& wh_t,
                               const LSTMState& prev) {
  const std::size_t h = params.hidden_dim();
  Tensor pre = add(add(matmul(x_t, wx_t), matmul(prev.h, wh_t)), params.bias);
  Tensor gi = sigmoid(slice_cols(pre, 0, h));
  Tensor gf = sigmoid(slice_cols(pre, h, 2 * h));
  Tensor gc = cmf::tanh(slice_cols(pre, 2 * h, 3 * h));
  Tensor go = sigmoid(slice_cols(pre, 3 * h, 4 * h));
  Tensor c = add(mul(gf, prev.c), mul(gi, gc));
  Tensor hh = mul(go, cmf::tanh(c));
  return {hh, c};
}

}  // namespace detail

// One step of the standard LSTM recurrence.
inline LSTMState lstm_cell_step(const LSTMCellParams& params, const Tensor& x_t,
                                const Tensor& h_prev, const Tensor& c_prev) {
  if (x_t.ndim() != 2 || x_t.shape()[1] != params.in_dim()) {
    throw ShapeError("lstm_cell_step input " + detail::shape_str(x_t.shape()) +
                     " does not match cell input dim " +
                     std::to_string(params.in_dim()));
  }
  if (h_prev.shape() != Shape{1, params.hidden_dim()} ||
      c_prev.shape() != Shape{1, params.hidden_dim()}) {
    throw ShapeError("lstm_cell_step state shapes " +
                     detail::shape_str(h_prev.shape()) + "/" +
                     detail::shape_str(c_prev.shape()) +
                     " do not match hidden dim " +
                     std::to_string(params.hidden_dim()));
  }
  return detail::lstm_step_pre(params, x_t, transpose(params.w_input),
                               transpose(params.w_recur), {h_prev, c_prev});
}

namespace detail {

inline void check_sequence_mask(const Tensor& x, const Mask& mask,
                                const char* op) {
  require_2d(x, op);
  if (mask.size() != x.shape()[0]) {
    throw ShapeError(std::string(op) + " mask length " +
                     std::to_string(mask.size()) + " does not match sequence " +
                     shape_str(x.shape()));
  }
  bool any = false;
  for (auto m : mask) any = any || (m != 0);
  if (!any) throw ContractError(std::string(op) + ": empty sequence (no valid steps)");
}

}  // namespace detail

// Unidirectional masked LSTM over a sequence. Masked steps carry the state
// through unchanged and emit zero rows. `reversed` runs the recurrence from
// the last step to the first while keeping output rows in input order.
inline Tensor lstm_forward(const LSTMCellParams& cell, const Tensor& x,
                           const Mask& mask, bool reversed = false) {
  detail::check_sequence_mask(x, mask, "lstm_forward");
  const std::size_t t_len = x.shape()[0];
  const std::size_t h = cell.hidden_dim();
  Tensor wx_t = transpose(cell.w_input);
  Tensor wh_t = transpose(cell.w_recur);
  LSTMState state{Tensor::zeros({1, h}), Tensor::zeros({1, h})};
  std::vector<Tensor> out_rows(t_len);
  for (std::size_t step = 0; step < t_len; ++step) {
    const std::size_t t = reversed ? t_len - 1 - step : step;
    if (mask[t]) {
      state = detail::lstm_step_pre(cell, row(x, t), wx_t, wh_t, state);
      out_rows[t] = state.h;
    } else {
      out_rows[t] = Tensor::zeros({1, h});
    }
  }
  return concat(out_rows, 0);
}

// Bidirectional LSTM: concat of the forward pass and the time-reversed
// backward pass per step, [T x 2h].
inline Tensor bilstm_forward(const LSTMCellParams& fwd_cell,
                             const LSTMCellParams& bwd_cell, const Tensor& x,
                             const Mask& mask) {
  detail::check_sequence_mask(x, mask, "bilstm_forward");
  Tensor fwd = lstm_forward(fwd_cell, x, mask, /*reversed=*/false);
  Tensor bwd = lstm_forward(bwd_cell, x, mask, /*reversed=*/true);
  return concat(fwd, bwd, 1);
}

// ---------------------------------------------------------------------------
// Feed-forward sublayer
// ---------------------------------------------------------------------------

struct FeedForwardParams {
  LinearLayer lin1;
  LinearLayer lin2;

  FeedForwardParams() = default;
  FeedForwardParams(std::size_t d_model, std::size_t inner, Rng& rng)
      : lin1(d_model, inner, rng), lin2(inner, d_model, rng) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    lin1.append_params(prefix + ".lin1", out);
    lin2.append_params(prefix + ".lin2", out);
  }
};

// linear -> rectifier -> linear, preserving the model width.
inline Tensor feed_forward(const FeedForwardParams& params, const Tensor& x) {
  return params.lin2.forward(relu(params.lin1.forward(x)));
}

}  // namespace cmf
