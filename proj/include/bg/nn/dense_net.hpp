#pragma once

#include <bg/common.hpp>

#include <cstring>
#include <vector>

namespace bg {

enum class Act { Linear, Relu, Tanh };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::Linear: return "linear";
    case Act::Relu: return "relu";
    case Act::Tanh: return "tanh";
  }
  return "?";
}

inline Act act_from_name(const std::string& s) {
  if (s == "linear") return Act::Linear;
  if (s == "relu") return Act::Relu;
  if (s == "tanh") return Act::Tanh;
  throw ConfigError("unknown activation: " + s);
}

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out
  Act act = Act::Linear;
};

// Fully connected net evaluated on row-batches (B x in -> B x out). The
// output is multiplied by output_scale after the last activation; a bounded
// scale function is then tanh output with output_scale = cap.
struct DenseNet {
  std::vector<DenseLayer> layers;
  double output_scale = 1.0;

  Eigen::Index input_width() const { return layers.front().W.cols(); }
  Eigen::Index output_width() const { return layers.back().W.rows(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.W.size() + l.b.size();
    return n;
  }
};

// Hidden layers of width n_hidden with the given activation, then one output
// layer. Glorot-uniform weights; the output layer is zero so the net starts
// as the constant-zero map.
inline DenseNet make_dense_net(Eigen::Index in, Eigen::Index out, int n_layers_hidden,
                               Eigen::Index n_hidden, Act hidden_act, Act out_act,
                               double output_scale, Rng& rng) {
  require(in > 0 && out > 0 && n_layers_hidden >= 0 && n_hidden > 0,
          "make_dense_net: bad widths");
  DenseNet net;
  net.output_scale = output_scale;
  Eigen::Index prev = in;
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix w(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = rng.uniform(-a, a);
    return w;
  };
  for (int k = 0; k < n_layers_hidden; ++k) {
    net.layers.push_back({glorot(n_hidden, prev), Vector::Zero(n_hidden), hidden_act});
    prev = n_hidden;
  }
  net.layers.push_back({Matrix::Zero(out, prev), Vector::Zero(out), out_act});
  return net;
}

struct NetTape {
  Matrix input;                // B x in
  std::vector<Matrix> pre;     // pre-activation per layer
  std::vector<Matrix> post;    // post-activation per layer
};

inline Matrix apply_act(Act a, const Matrix& x) {
  switch (a) {
    case Act::Linear: return x;
    case Act::Relu: return x.cwiseMax(0.0);
    case Act::Tanh: return x.array().tanh().matrix();
  }
  return x;
}

// y = scale * act_L(W_L act_{L-1}(...) + b_L); tape captures everything the
// backward pass needs.
inline Matrix net_forward(const DenseNet& net, const Matrix& x, NetTape* tape = nullptr) {
  require(x.cols() == net.input_width(), "net_forward: width mismatch");
  if (tape) {
    tape->input = x;
    tape->pre.clear();
    tape->post.clear();
  }
  Matrix cur = x;
  for (const auto& l : net.layers) {
    Matrix pre = cur * l.W.transpose();
    pre.rowwise() += l.b.transpose();
    Matrix post = apply_act(l.act, pre);
    if (tape) {
      tape->pre.push_back(pre);
      tape->post.push_back(std::move(post));
      cur = tape->post.back();
    } else {
      cur = std::move(post);
    }
  }
  return cur * net.output_scale;
}

// Reverse-mode pass: given dL/dy, accumulates dL/dW, dL/db into grad (same
// layout as write_parameters) and returns dL/dx. grad must be pre-sized.
inline Matrix net_backward(const DenseNet& net, const NetTape& tape, const Matrix& dy,
                           double* grad) {
  require(tape.pre.size() == net.layers.size(), "net_backward: tape mismatch");
  Matrix delta = dy * net.output_scale;
  // offset of layer k's parameters inside this net's block
  std::vector<Eigen::Index> offs(net.layers.size());
  Eigen::Index off = 0;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    offs[k] = off;
    off += net.layers[k].W.size() + net.layers[k].b.size();
  }
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& l = net.layers[k];
    switch (l.act) {
      case Act::Linear: break;
      case Act::Relu:
        delta = (tape.pre[k].array() > 0.0).cast<double>().matrix().cwiseProduct(delta);
        break;
      case Act::Tanh: {
        const Matrix& t = tape.post[k];
        delta = (1.0 - t.array().square()).matrix().cwiseProduct(delta);
        break;
      }
    }
    const Matrix& in = (k == 0) ? tape.input : tape.post[k - 1];
    Matrix gW = delta.transpose() * in;           // out x in
    Vector gb = delta.colwise().sum().transpose();  // out
    Eigen::Map<Matrix>(grad + offs[k], gW.rows(), gW.cols()) += gW;
    Eigen::Map<Vector>(grad + offs[k] + gW.size(), gb.size()) += gb;
    delta = delta * l.W;  // B x in
  }
  return delta;
}

// Flat parameter block I/O; W stored column-major, then b, layer by layer.
inline void write_net_parameters(const DenseNet& net, double* dst) {
  for (const auto& l : net.layers) {
    std::memcpy(dst, l.W.data(), sizeof(double) * l.W.size());
    dst += l.W.size();
    std::memcpy(dst, l.b.data(), sizeof(double) * l.b.size());
    dst += l.b.size();
  }
}

inline void read_net_parameters(DenseNet& net, const double* src) {
  for (auto& l : net.layers) {
    std::memcpy(l.W.data(), src, sizeof(double) * l.W.size());
    src += l.W.size();
    std::memcpy(l.b.data(), src, sizeof(double) * l.b.size());
    src += l.b.size();
  }
}

}  // namespace bg
