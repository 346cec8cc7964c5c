#pragma once

#include <bg/nn/dense_net.hpp>

#include <vector>

namespace bg {

inline Matrix gather_cols(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
  return out;
}

inline void scatter_cols(Matrix& dst, const std::vector<Eigen::Index>& idx,
                         const Matrix& src) {
  for (std::size_t j = 0; j < idx.size(); ++j) dst.col(idx[j]) = src.col(j);
}

// Affine coupling layer. The conditioner channel passes through unchanged;
// the transformed channel is scaled by exp(S(cond)) and shifted by T(cond)
// on the x -> z pass, so both passes need one S and one T evaluation and the
// log-Jacobian is the row sum of S.
struct CouplingLayer {
  std::vector<Eigen::Index> idx_cond;
  std::vector<Eigen::Index> idx_trans;
  DenseNet s_net;  // |cond| -> |trans|, bounded output
  DenseNet t_net;  // |cond| -> |trans|

  Eigen::Index width() const {
    return static_cast<Eigen::Index>(idx_cond.size() + idx_trans.size());
  }
  Eigen::Index parameter_count() const {
    return s_net.parameter_count() + t_net.parameter_count();
  }
};

struct CouplingTrace {
  NetTape s_tape, t_tape;
  Matrix s;         // B x |trans|
  Matrix in_trans;  // transformed-channel input of the executed pass
};

// x -> z. logdet accumulates per-sample log |det dz/dx|.
inline Matrix coupling_forward(const CouplingLayer& l, const Matrix& x, Vector& logdet,
                               CouplingTrace* trace = nullptr) {
  const Matrix xc = gather_cols(x, l.idx_cond);
  const Matrix xt = gather_cols(x, l.idx_trans);
  NetTape st, tt;
  const Matrix s = net_forward(l.s_net, xc, trace ? &st : nullptr);
  const Matrix t = net_forward(l.t_net, xc, trace ? &tt : nullptr);
  Matrix z(x.rows(), x.cols());
  scatter_cols(z, l.idx_cond, xc);
  scatter_cols(z, l.idx_trans,
               (xt.array() * s.array().exp() + t.array()).matrix());
  logdet += s.rowwise().sum();
  if (trace) {
    trace->s_tape = std::move(st);
    trace->t_tape = std::move(tt);
    trace->s = s;
    trace->in_trans = xt;
  }
  return z;
}

// z -> x. logdet accumulates per-sample log |det dx/dz| = -sum S.
inline Matrix coupling_inverse(const CouplingLayer& l, const Matrix& z, Vector& logdet,
                               CouplingTrace* trace = nullptr) {
  const Matrix zc = gather_cols(z, l.idx_cond);
  const Matrix zt = gather_cols(z, l.idx_trans);
  NetTape st, tt;
  const Matrix s = net_forward(l.s_net, zc, trace ? &st : nullptr);
  const Matrix t = net_forward(l.t_net, zc, trace ? &tt : nullptr);
  Matrix x(z.rows(), z.cols());
  scatter_cols(x, l.idx_cond, zc);
  scatter_cols(x, l.idx_trans,
               ((zt.array() - t.array()) * (-s.array()).exp()).matrix());
  logdet -= s.rowwise().sum();
  if (trace) {
    trace->s_tape = std::move(st);
    trace->t_tape = std::move(tt);
    trace->s = s;
    trace->in_trans = zt;
  }
  return x;
}

// Reverse-mode through the x -> z pass. d_out is dL/dz; d_logdet is the
// per-sample adjoint of the accumulated log-Jacobian. Returns dL/dx and adds
// the S/T parameter gradients into grad (S block first).
inline Matrix coupling_backward_forward(const CouplingLayer& l, const CouplingTrace& tr,
                                        const Matrix& d_out, const Vector& d_logdet,
                                        double* grad) {
  const Matrix dz_c = gather_cols(d_out, l.idx_cond);
  const Matrix dz_t = gather_cols(d_out, l.idx_trans);
  const Matrix es = tr.s.array().exp().matrix();
  const Matrix dxt = dz_t.cwiseProduct(es);
  Matrix ds = dz_t.cwiseProduct(tr.in_trans).cwiseProduct(es);
  ds.colwise() += d_logdet;
  const Matrix dxc_s = net_backward(l.s_net, tr.s_tape, ds, grad);
  const Matrix dxc_t =
      net_backward(l.t_net, tr.t_tape, dz_t, grad + l.s_net.parameter_count());
  Matrix dx(d_out.rows(), d_out.cols());
  scatter_cols(dx, l.idx_cond, dz_c + dxc_s + dxc_t);
  scatter_cols(dx, l.idx_trans, dxt);
  return dx;
}

// Reverse-mode through the z -> x pass; d_out is dL/dx, returns dL/dz.
inline Matrix coupling_backward_inverse(const CouplingLayer& l, const CouplingTrace& tr,
                                        const Matrix& d_out, const Vector& d_logdet,
                                        double* grad) {
  const Matrix dx_c = gather_cols(d_out, l.idx_cond);
  const Matrix dx_t = gather_cols(d_out, l.idx_trans);
  const Matrix ems = (-tr.s.array()).exp().matrix();
  const Matrix dz_t = dx_t.cwiseProduct(ems);
  const Matrix dt = -dz_t;
  // dL/ds = -dx_t .* x_t with x_t = (z_t - t) exp(-s) rebuilt from the tape.
  const Matrix x_t_val =
      ((tr.in_trans - tr.t_tape.post.back() * l.t_net.output_scale).array() *
       ems.array())
          .matrix();
  Matrix ds = -dx_t.cwiseProduct(x_t_val);
  ds.colwise() -= d_logdet;
  const Matrix dzc_s = net_backward(l.s_net, tr.s_tape, ds, grad);
  const Matrix dzc_t =
      net_backward(l.t_net, tr.t_tape, dt, grad + l.s_net.parameter_count());
  Matrix dz(d_out.rows(), d_out.cols());
  scatter_cols(dz, l.idx_cond, dx_c + dzc_s + dzc_t);
  scatter_cols(dz, l.idx_trans, dz_t);
  return dz;
}

inline void write_coupling_parameters(const CouplingLayer& l, double* dst) {
  write_net_parameters(l.s_net, dst);
  write_net_parameters(l.t_net, dst + l.s_net.parameter_count());
}

inline void read_coupling_parameters(CouplingLayer& l, const double* src) {
  read_net_parameters(l.s_net, src);
  read_net_parameters(l.t_net, src + l.s_net.parameter_count());
}

}  // namespace bg
