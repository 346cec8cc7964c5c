#pragma once

#include <bg/flow/coupling.hpp>
#include <bg/flow/whitening.hpp>
#include <bg/ic/mixed_layer.hpp>

#include <optional>
#include <variant>
#include <vector>

namespace bg {

using FlowLayer = std::variant<WhiteningLayer, MixedLayer, CouplingLayer>;

inline Eigen::Index layer_x_width(const FlowLayer& l) {
  return std::visit([](const auto& v) -> Eigen::Index {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, CouplingLayer>) return v.width();
    else return v.x_width();
  }, l);
}

inline Eigen::Index layer_z_width(const FlowLayer& l) {
  return std::visit([](const auto& v) -> Eigen::Index {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, CouplingLayer>) return v.width();
    else return v.z_width();
  }, l);
}

// Invertible map between configuration space x and latent space z. layers[0]
// touches x; the last layer touches z. Fixed coordinate layers (whitening,
// mixed) may only appear as layers[0].
struct FlowStack {
  std::vector<FlowLayer> layers;

  Eigen::Index x_width() const { return layer_x_width(layers.front()); }
  Eigen::Index z_width() const { return layer_z_width(layers.back()); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers)
      if (const auto* c = std::get_if<CouplingLayer>(&l)) n += c->parameter_count();
    return n;
  }

  Vector parameters() const {
    Vector p(parameter_count());
    Eigen::Index off = 0;
    for (const auto& l : layers)
      if (const auto* c = std::get_if<CouplingLayer>(&l)) {
        write_coupling_parameters(*c, p.data() + off);
        off += c->parameter_count();
      }
    return p;
  }

  void set_parameters(const Vector& p) {
    require(p.size() == parameter_count(), "set_parameters: size mismatch");
    Eigen::Index off = 0;
    for (auto& l : layers)
      if (auto* c = std::get_if<CouplingLayer>(&l)) {
        read_coupling_parameters(*c, p.data() + off);
        off += c->parameter_count();
      }
  }

  void validate() const {
    require(!layers.empty(), "FlowStack: empty");
    for (std::size_t i = 1; i < layers.size(); ++i) {
      require(std::holds_alternative<CouplingLayer>(layers[i]),
              "FlowStack: coordinate layers only at position 0");
      require(layer_x_width(layers[i]) == layer_z_width(layers[i - 1]),
              "FlowStack: width mismatch between layers");
    }
  }
};

// ---------------------------------------------------------------------------
// Evaluation with traces
// ---------------------------------------------------------------------------

struct XZEval {
  Matrix z;
  Vector logdet;  // per-sample log |det dz/dx|
  std::vector<CouplingTrace> traces;  // one per coupling layer, stack order
};

struct ZXEval {
  Matrix x;
  Vector logdet;  // per-sample log |det dx/dz|
  std::vector<char> valid;
  std::vector<CouplingTrace> traces;               // one per coupling layer, stack order
  std::optional<MixedInverseResult> mixed_result;  // set when layers[0] is MixedLayer
};

inline XZEval flow_forward_xz(const FlowStack& f, const Matrix& x, bool with_trace) {
  XZEval ev;
  ev.logdet = Vector::Zero(x.rows());
  Matrix cur = x;
  for (const auto& l : f.layers) {
    if (const auto* w = std::get_if<WhiteningLayer>(&l)) {
      ev.logdet.array() += w->logdet_xz();
      cur = w->forward(cur);
    } else if (const auto* m = std::get_if<MixedLayer>(&l)) {
      cur = mixed_forward(*m, cur, ev.logdet);
    } else {
      const auto& c = std::get<CouplingLayer>(l);
      if (with_trace) {
        ev.traces.emplace_back();
        cur = coupling_forward(c, cur, ev.logdet, &ev.traces.back());
      } else {
        cur = coupling_forward(c, cur, ev.logdet);
      }
    }
  }
  ev.z = std::move(cur);
  return ev;
}

inline ZXEval flow_inverse_zx(const FlowStack& f, const Matrix& z, bool with_trace) {
  ZXEval ev;
  ev.logdet = Vector::Zero(z.rows());
  ev.valid.assign(static_cast<std::size_t>(z.rows()), 1);
  Matrix cur = z;
  std::vector<CouplingTrace> rtraces;
  for (std::size_t i = f.layers.size(); i-- > 0;) {
    const auto& l = f.layers[i];
    if (const auto* w = std::get_if<WhiteningLayer>(&l)) {
      ev.logdet.array() += w->logdet_zx();
      cur = w->inverse(cur);
    } else if (const auto* m = std::get_if<MixedLayer>(&l)) {
      MixedInverseResult r = mixed_inverse(*m, cur, ev.logdet);
      cur = r.x;
      ev.valid = r.valid;
      ev.mixed_result = std::move(r);
    } else {
      const auto& c = std::get<CouplingLayer>(l);
      if (with_trace) {
        rtraces.emplace_back();
        cur = coupling_inverse(c, cur, ev.logdet, &rtraces.back());
      } else {
        cur = coupling_inverse(c, cur, ev.logdet);
      }
    }
  }
  if (with_trace) {
    // rtraces were filled z-side first; store them in stack order
    for (std::size_t i = 0; i < rtraces.size(); ++i)
      ev.traces.emplace_back(std::move(rtraces[rtraces.size() - 1 - i]));
  }
  ev.x = std::move(cur);
  return ev;
}

// Reverse-mode through the x -> z pass. d_z is dL/dz, d_logdet the per-sample
// adjoint of log R_xz. Parameter gradients accumulate into grad; propagation
// stops at a coordinate layer (no trainable parameters below it).
inline void flow_backward_xz(const FlowStack& f, const XZEval& ev, const Matrix& d_z,
                             const Vector& d_logdet, Vector& grad) {
  require(grad.size() == f.parameter_count(), "flow_backward_xz: grad size");
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& l : f.layers)
    if (const auto* c = std::get_if<CouplingLayer>(&l)) {
      offsets.push_back(off);
      off += c->parameter_count();
    }
  Matrix cur = d_z;
  std::size_t ti = ev.traces.size();
  for (std::size_t i = f.layers.size(); i-- > 0;) {
    const auto* c = std::get_if<CouplingLayer>(&f.layers[i]);
    if (!c) break;  // coordinate layer: nothing trainable at or below
    --ti;
    cur = coupling_backward_forward(*c, ev.traces[ti], cur, d_logdet,
                                    grad.data() + offsets[ti]);
  }
}

// Reverse-mode through the z -> x pass. d_x is dL/dx, d_logdet the per-sample
// adjoint of log R_zx. inject_after_coordinate is added to the adjoint right
// above layers[0] when that layer is a coordinate layer (used for penalties
// defined on the pre-placement internal coordinates). Returns dL/dz.
inline Matrix flow_backward_zx(const FlowStack& f, const ZXEval& ev, const Matrix& d_x,
                               const Vector& d_logdet, Vector& grad,
                               const Matrix* inject_after_coordinate = nullptr) {
  require(grad.size() == f.parameter_count(), "flow_backward_zx: grad size");
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& l : f.layers)
    if (const auto* c = std::get_if<CouplingLayer>(&l)) {
      offsets.push_back(off);
      off += c->parameter_count();
    }
  Matrix cur = d_x;
  std::size_t ti = 0;
  for (std::size_t i = 0; i < f.layers.size(); ++i) {
    const auto& l = f.layers[i];
    if (const auto* w = std::get_if<WhiteningLayer>(&l)) {
      cur = w->backward_inverse(cur);
      if (inject_after_coordinate) cur += *inject_after_coordinate;
    } else if (const auto* m = std::get_if<MixedLayer>(&l)) {
      require(ev.mixed_result.has_value(), "flow_backward_zx: missing mixed trace");
      cur = mixed_backward_inverse(*m, *ev.mixed_result, cur, d_logdet);
      if (inject_after_coordinate) cur += *inject_after_coordinate;
    } else {
      const auto& c = std::get<CouplingLayer>(l);
      cur = coupling_backward_inverse(c, ev.traces[ti], cur, d_logdet,
                                      grad.data() + offsets[ti]);
      ++ti;
    }
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

struct FlowConfig {
  std::string architecture = "R4";  // tokens: W, M, R<n>
  int hidden_layers = 3;
  Eigen::Index hidden_width = 100;
  double scale_cap = 3.0;
  int discard_null = 0;  // whitening only
  ZMatrixSpec zmatrix;   // mixed layer only
};

inline CouplingLayer make_coupling(const std::vector<Eigen::Index>& cond,
                                   const std::vector<Eigen::Index>& trans,
                                   const FlowConfig& cfg, Rng& rng) {
  CouplingLayer c;
  c.idx_cond = cond;
  c.idx_trans = trans;
  const auto nc = static_cast<Eigen::Index>(cond.size());
  const auto nt = static_cast<Eigen::Index>(trans.size());
  c.s_net = make_dense_net(nc, nt, cfg.hidden_layers, cfg.hidden_width, Act::Tanh,
                           Act::Tanh, cfg.scale_cap, rng);
  c.t_net = make_dense_net(nc, nt, cfg.hidden_layers, cfg.hidden_width, Act::Relu,
                           Act::Linear, 1.0, rng);
  return c;
}

// Token grammar: "W" whitening, "M" mixed coordinates, "R<n>" n pairs of
// coupling layers with alternating even/odd conditioning. Coordinate layers
// are fitted from data, so data must be provided when they appear.
inline FlowStack build_flow(const FlowConfig& cfg, Eigen::Index x_dim,
                            const Matrix* data, Rng& rng) {
  FlowStack f;
  Eigen::Index cur = x_dim;
  std::istringstream is(cfg.architecture);
  std::string tok;
  bool first = true;
  while (is >> tok) {
    if (tok == "W") {
      if (!first) throw ConfigError("architecture: W must come first");
      if (!data) throw ConfigError("architecture: W requires training data");
      if (data->cols() != x_dim) throw ConfigError("architecture: data width mismatch");
      WhiteningLayer w = fit_whitening(*data, cfg.discard_null);
      cur = w.z_width();
      f.layers.emplace_back(std::move(w));
    } else if (tok == "M") {
      if (!first) throw ConfigError("architecture: M must come first");
      if (!data) throw ConfigError("architecture: M requires training data");
      MixedLayer m = fit_mixed_layer(cfg.zmatrix, *data, cfg.discard_null);
      cur = m.z_width();
      f.layers.emplace_back(std::move(m));
    } else if (tok.size() > 1 && tok[0] == 'R') {
      int n = 0;
      try {
        n = std::stoi(tok.substr(1));
      } catch (...) {
        throw ConfigError("architecture: bad token '" + tok + "'");
      }
      if (n < 1) throw ConfigError("architecture: R count must be >= 1");
      if (cur < 2) throw ConfigError("architecture: coupling needs width >= 2");
      std::vector<Eigen::Index> even, odd;
      for (Eigen::Index i = 0; i < cur; ++i) (i % 2 == 0 ? even : odd).push_back(i);
      for (int b = 0; b < n; ++b) {
        f.layers.emplace_back(make_coupling(even, odd, cfg, rng));
        f.layers.emplace_back(make_coupling(odd, even, cfg, rng));
      }
    } else {
      throw ConfigError("architecture: bad token '" + tok + "'");
    }
    first = false;
  }
  if (f.layers.empty()) throw ConfigError("architecture: empty");
  f.validate();
  return f;
}

}  // namespace bg
