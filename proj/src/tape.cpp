#include "motctl/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "motctl/nn.hpp"

namespace motctl::ad {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

Tape* same_tape(Val a, Val b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands from different tapes");
  return a.tape;
}

}  // namespace

Val Tape::constant(Mat v) {
  int id = add_node(std::move(v), false, nullptr);
  return {this, id};
}

Val Tape::leaf(Mat v) {
  int id = add_node(std::move(v), true, nullptr);
  return {this, id};
}

Val Tape::use_param(nn::ParameterStore& store, const std::string& name, bool trainable) {
  auto key = std::make_tuple(static_cast<const void*>(&store), name, trainable);
  auto it = param_cache_.find(key);
  if (it != param_cache_.end()) return {this, it->second};
  int id = add_node(store.value(name), trainable, nullptr);
  param_cache_[key] = id;
  if (trainable) bindings_.push_back({id, &store, name});
  return {this, id};
}

const Mat& Tape::val(Val v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape::val: handle does not belong to this tape");
  return nodes_[v.id].val;
}

double Tape::scalar(Val v) const {
  const Mat& m = val(v);
  if (m.rows() != 1 || m.cols() != 1)
    throw std::invalid_argument("Tape::scalar: node is not 1x1");
  return m(0, 0);
}

const Mat& Tape::grad(Val v) const {
  if (v.tape != this) throw std::invalid_argument("Tape::grad: wrong tape");
  return nodes_[v.id].grad;
}

int Tape::add_node(Mat value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.val = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_back(int id, std::function<void()> back) {
  nodes_[id].back = std::move(back);
}

void Tape::accum_grad(int id, const Mat& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  n.grad += delta;
}

void Tape::backward(Val loss) {
  if (backward_done_) throw std::logic_error("Tape::backward called twice");
  if (loss.tape != this) throw std::invalid_argument("Tape::backward: wrong tape");
  const Mat& lv = nodes_[loss.id].val;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("Tape::backward: loss must be 1x1");
  if (!nodes_[loss.id].requires_grad)
    throw std::invalid_argument("Tape::backward: loss does not depend on any parameter");
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
    n.back();
  }
  for (const Binding& b : bindings_) {
    const Mat& g = nodes_[b.id].grad;
    if (g.size() != 0) b.store->grad(b.name) += g;
  }
  backward_done_ = true;
}

// ---- ops ----

Val add(Val a, Val b) {
  Tape* t = same_tape(a, b, "add");
  const Mat& av = t->value_of(a.id);
  const Mat& bv = t->value_of(b.id);
  check_same_shape(av, bv, "add");
  bool rg = t->requires_grad(a.id) || t->requires_grad(b.id);
  int out = t->add_node(av + bv, rg, nullptr);
  if (rg) {
    int ai = a.id, bi = b.id;
    t->set_back(out, [t, out, ai, bi] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g);
      t->accum_grad(bi, g);
    });
  }
  return {t, out};
}

Val sub(Val a, Val b) {
  Tape* t = same_tape(a, b, "sub");
  const Mat& av = t->value_of(a.id);
  const Mat& bv = t->value_of(b.id);
  check_same_shape(av, bv, "sub");
  bool rg = t->requires_grad(a.id) || t->requires_grad(b.id);
  int out = t->add_node(av - bv, rg, nullptr);
  if (rg) {
    int ai = a.id, bi = b.id;
    t->set_back(out, [t, out, ai, bi] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g);
      t->accum_grad(bi, -g);
    });
  }
  return {t, out};
}

Val cmul(Val a, Val b) {
  Tape* t = same_tape(a, b, "cmul");
  const Mat& av = t->value_of(a.id);
  const Mat& bv = t->value_of(b.id);
  check_same_shape(av, bv, "cmul");
  bool rg = t->requires_grad(a.id) || t->requires_grad(b.id);
  int out = t->add_node(av.cwiseProduct(bv), rg, nullptr);
  if (rg) {
    int ai = a.id, bi = b.id;
    t->set_back(out, [t, out, ai, bi] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g.cwiseProduct(t->value_of(bi)));
      t->accum_grad(bi, g.cwiseProduct(t->value_of(ai)));
    });
  }
  return {t, out};
}

Val add_rowvec(Val a, Val b) {
  Tape* t = same_tape(a, b, "add_rowvec");
  const Mat& av = t->value_of(a.id);
  const Mat& bv = t->value_of(b.id);
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw std::invalid_argument("add_rowvec: bias must be [1 x cols(a)]");
  bool rg = t->requires_grad(a.id) || t->requires_grad(b.id);
  Mat v = av;
  v.rowwise() += bv.row(0);
  int out = t->add_node(std::move(v), rg, nullptr);
  if (rg) {
    int ai = a.id, bi = b.id;
    t->set_back(out, [t, out, ai, bi] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g);
      t->accum_grad(bi, g.colwise().sum());
    });
  }
  return {t, out};
}

Val scale(Val a, double s) {
  Tape* t = a.tape;
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(t->value_of(a.id) * s, rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, s] { t->accum_grad(ai, t->grad_of(out) * s); });
  }
  return {t, out};
}

Val add_const(Val a, double c) {
  Tape* t = a.tape;
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(Mat((t->value_of(a.id).array() + c).matrix()), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] { t->accum_grad(ai, t->grad_of(out)); });
  }
  return {t, out};
}

Val matmul(Val a, Val b) {
  Tape* t = same_tape(a, b, "matmul");
  const Mat& av = t->value_of(a.id);
  const Mat& bv = t->value_of(b.id);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  bool rg = t->requires_grad(a.id) || t->requires_grad(b.id);
  int out = t->add_node(av * bv, rg, nullptr);
  if (rg) {
    int ai = a.id, bi = b.id;
    t->set_back(out, [t, out, ai, bi] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g * t->value_of(bi).transpose());
      t->accum_grad(bi, t->value_of(ai).transpose() * g);
    });
  }
  return {t, out};
}

Val transpose(Val a) {
  Tape* t = a.tape;
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(t->value_of(a.id).transpose(), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      t->accum_grad(ai, t->grad_of(out).transpose());
    });
  }
  return {t, out};
}

Val sigmoid(Val a) {
  Tape* t = a.tape;
  Mat y = (1.0 / (1.0 + (-t->value_of(a.id).array()).exp())).matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      const Mat& yv = t->value_of(out);
      Mat d = (yv.array() * (1.0 - yv.array())).matrix();
      t->accum_grad(ai, t->grad_of(out).cwiseProduct(d));
    });
  }
  return {t, out};
}

Val tanhv(Val a) {
  Tape* t = a.tape;
  Mat y = t->value_of(a.id).array().tanh().matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      const Mat& yv = t->value_of(out);
      Mat d = (1.0 - yv.array().square()).matrix();
      t->accum_grad(ai, t->grad_of(out).cwiseProduct(d));
    });
  }
  return {t, out};
}

Val expv(Val a) {
  Tape* t = a.tape;
  Mat y = t->value_of(a.id).array().exp().matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      t->accum_grad(ai, t->grad_of(out).cwiseProduct(t->value_of(out)));
    });
  }
  return {t, out};
}

Val logv(Val a) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  if ((av.array() <= 0.0).any()) throw std::domain_error("logv: non-positive input");
  Mat y = av.array().log().matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      t->accum_grad(ai, t->grad_of(out).cwiseQuotient(t->value_of(ai)));
    });
  }
  return {t, out};
}

Val clampv(Val a, double lo, double hi) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  Mat y = av.array().max(lo).min(hi).matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, lo, hi] {
      const Mat& x = t->value_of(ai);
      Mat mask = ((x.array() > lo) && (x.array() < hi)).cast<double>().matrix();
      t->accum_grad(ai, t->grad_of(out).cwiseProduct(mask));
    });
  }
  return {t, out};
}

Val prelu(Val x, Val slope) {
  Tape* t = same_tape(x, slope, "prelu");
  const Mat& xv = t->value_of(x.id);
  const Mat& sv = t->value_of(slope.id);
  if (sv.rows() != 1 || sv.cols() != 1)
    throw std::invalid_argument("prelu: slope must be 1x1");
  double s = sv(0, 0);
  Mat y = (xv.array().max(0.0) + s * xv.array().min(0.0)).matrix();
  bool rg = t->requires_grad(x.id) || t->requires_grad(slope.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int xi = x.id, si = slope.id;
    t->set_back(out, [t, out, xi, si, s] {
      const Mat& g = t->grad_of(out);
      const Mat& x = t->value_of(xi);
      Mat dx = ((x.array() >= 0.0).select(g.array(), g.array() * s)).matrix();
      t->accum_grad(xi, dx);
      double ds = ((x.array() < 0.0).cast<double>() * x.array() * g.array()).sum();
      t->accum_grad(si, Mat::Constant(1, 1, ds));
    });
  }
  return {t, out};
}

Val abs_floor(Val a, double floor) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  Mat y = av.array().abs().max(floor).matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, floor] {
      const Mat& x = t->value_of(ai);
      Mat d = ((x.array().abs() > floor).cast<double>() * x.array().sign()).matrix();
      t->accum_grad(ai, t->grad_of(out).cwiseProduct(d));
    });
  }
  return {t, out};
}

Val sum(Val a) {
  Tape* t = a.tape;
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(Mat::Constant(1, 1, t->value_of(a.id).sum()), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      const Mat& x = t->value_of(ai);
      double g = t->grad_of(out)(0, 0);
      t->accum_grad(ai, Mat::Constant(x.rows(), x.cols(), g));
    });
  }
  return {t, out};
}

Val sum_sq(Val a) {
  Tape* t = a.tape;
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(Mat::Constant(1, 1, t->value_of(a.id).squaredNorm()), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      double g = t->grad_of(out)(0, 0);
      t->accum_grad(ai, 2.0 * g * t->value_of(ai));
    });
  }
  return {t, out};
}

Val row_sum_sq(Val a) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  Mat y = av.array().square().rowwise().sum().matrix();
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai] {
      const Mat& g = t->grad_of(out);  // [B x 1]
      const Mat& x = t->value_of(ai);
      Mat dx = (2.0 * (x.array().colwise() * g.col(0).array())).matrix();
      t->accum_grad(ai, dx);
    });
  }
  return {t, out};
}

Val mean_all(Val a) {
  const Mat& av = a.tape->value_of(a.id);
  return scale(sum(a), 1.0 / static_cast<double>(av.size()));
}

Val concat_cols(const std::vector<Val>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Tape* t = parts[0].tape;
  Eigen::Index rows = t->value_of(parts[0].id).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Val p : parts) {
    same_tape(parts[0], p, "concat_cols");
    const Mat& v = t->value_of(p.id);
    if (v.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += v.cols();
    rg = rg || t->requires_grad(p.id);
  }
  Mat y(rows, cols);
  Eigen::Index c = 0;
  for (Val p : parts) {
    const Mat& v = t->value_of(p.id);
    y.middleCols(c, v.cols()) = v;
    c += v.cols();
  }
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (Val p : parts) ids.push_back(p.id);
    t->set_back(out, [t, out, ids] {
      const Mat& g = t->grad_of(out);
      Eigen::Index c = 0;
      for (int id : ids) {
        Eigen::Index w = t->value_of(id).cols();
        t->accum_grad(id, g.middleCols(c, w));
        c += w;
      }
    });
  }
  return {t, out};
}

Val concat_rows(const std::vector<Val>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Tape* t = parts[0].tape;
  Eigen::Index cols = t->value_of(parts[0].id).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Val p : parts) {
    same_tape(parts[0], p, "concat_rows");
    const Mat& v = t->value_of(p.id);
    if (v.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += v.rows();
    rg = rg || t->requires_grad(p.id);
  }
  Mat y(rows, cols);
  Eigen::Index r = 0;
  for (Val p : parts) {
    const Mat& v = t->value_of(p.id);
    y.middleRows(r, v.rows()) = v;
    r += v.rows();
  }
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (Val p : parts) ids.push_back(p.id);
    t->set_back(out, [t, out, ids] {
      const Mat& g = t->grad_of(out);
      Eigen::Index r = 0;
      for (int id : ids) {
        Eigen::Index h = t->value_of(id).rows();
        t->accum_grad(id, g.middleRows(r, h));
        r += h;
      }
    });
  }
  return {t, out};
}

Val slice_cols(Val a, int c0, int n) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  if (c0 < 0 || n < 0 || c0 + n > av.cols())
    throw std::invalid_argument("slice_cols: out of range");
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(av.middleCols(c0, n), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, c0, n] {
      const Mat& x = t->value_of(ai);
      Mat dx = Mat::Zero(x.rows(), x.cols());
      dx.middleCols(c0, n) = t->grad_of(out);
      t->accum_grad(ai, dx);
    });
  }
  return {t, out};
}

Val slice_rows(Val a, int r0, int n) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  if (r0 < 0 || n < 0 || r0 + n > av.rows())
    throw std::invalid_argument("slice_rows: out of range");
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(av.middleRows(r0, n), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, r0, n] {
      const Mat& x = t->value_of(ai);
      Mat dx = Mat::Zero(x.rows(), x.cols());
      dx.middleRows(r0, n) = t->grad_of(out);
      t->accum_grad(ai, dx);
    });
  }
  return {t, out};
}

Val select_cols(Val a, const std::vector<int>& idx) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  for (int c : idx)
    if (c < 0 || c >= av.cols()) throw std::invalid_argument("select_cols: out of range");
  Mat y(av.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) y.col(k) = av.col(idx[k]);
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    std::vector<int> ix = idx;
    t->set_back(out, [t, out, ai, ix] {
      const Mat& g = t->grad_of(out);
      const Mat& x = t->value_of(ai);
      Mat dx = Mat::Zero(x.rows(), x.cols());
      for (std::size_t k = 0; k < ix.size(); ++k) dx.col(ix[k]) += g.col(k);
      t->accum_grad(ai, dx);
    });
  }
  return {t, out};
}

Val div_by(Val a, Val denom) {
  Tape* t = same_tape(a, denom, "div_by");
  const Mat& dv = t->value_of(denom.id);
  if (dv.rows() != 1 || dv.cols() != 1)
    throw std::invalid_argument("div_by: denominator must be 1x1");
  double s = dv(0, 0);
  bool rg = t->requires_grad(a.id) || t->requires_grad(denom.id);
  int out = t->add_node(t->value_of(a.id) / s, rg, nullptr);
  if (rg) {
    int ai = a.id, di = denom.id;
    t->set_back(out, [t, out, ai, di, s] {
      const Mat& g = t->grad_of(out);
      t->accum_grad(ai, g / s);
      double dd = -(g.cwiseProduct(t->value_of(out))).sum() / s;
      t->accum_grad(di, Mat::Constant(1, 1, dd));
    });
  }
  return {t, out};
}

Val min_scalar(const std::vector<Val>& xs) {
  if (xs.empty()) throw std::invalid_argument("min_scalar: empty");
  Tape* t = xs[0].tape;
  int argmin = 0;
  double best = t->scalar(xs[0]);
  bool rg = false;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    same_tape(xs[0], xs[k], "min_scalar");
    double v = t->scalar(xs[k]);
    if (v < best) {
      best = v;
      argmin = static_cast<int>(k);
    }
    rg = rg || t->requires_grad(xs[k].id);
  }
  int out = t->add_node(Mat::Constant(1, 1, best), rg, nullptr);
  if (rg) {
    int src = xs[argmin].id;
    t->set_back(out, [t, out, src] { t->accum_grad(src, t->grad_of(out)); });
  }
  return {t, out};
}

Val normalize_rows3(Val a, double eps, std::vector<int>* degenerate_rows) {
  Tape* t = a.tape;
  const Mat& av = t->value_of(a.id);
  if (av.cols() != 3) throw std::invalid_argument("normalize_rows3: need 3 columns");
  Mat y(av.rows(), 3);
  std::vector<char> degen(av.rows(), 0);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    double n = av.row(r).norm();
    if (n < eps) {
      y.row(r) << 0.0, 0.0, 1.0;
      degen[r] = 1;
      if (degenerate_rows) degenerate_rows->push_back(static_cast<int>(r));
    } else {
      y.row(r) = av.row(r) / n;
    }
  }
  bool rg = t->requires_grad(a.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int ai = a.id;
    t->set_back(out, [t, out, ai, degen] {
      const Mat& g = t->grad_of(out);
      const Mat& x = t->value_of(ai);
      const Mat& yv = t->value_of(out);
      Mat dx = Mat::Zero(x.rows(), 3);
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        if (degen[r]) continue;  // constant output, no gradient
        double n = x.row(r).norm();
        double dot = yv.row(r).dot(g.row(r));
        dx.row(r) = (g.row(r) - dot * yv.row(r)) / n;
      }
      t->accum_grad(ai, dx);
    });
  }
  return {t, out};
}

Val upper_triangular(Val strict_upper, Val log_diag, int m) {
  Tape* t = same_tape(strict_upper, log_diag, "upper_triangular");
  const Mat& uv = t->value_of(strict_upper.id);
  const Mat& dv = t->value_of(log_diag.id);
  int n_strict = m * (m - 1) / 2;
  if (uv.rows() != 1 || uv.cols() != n_strict)
    throw std::invalid_argument("upper_triangular: strict part must be [1 x m(m-1)/2]");
  if (dv.rows() != 1 || dv.cols() != m)
    throw std::invalid_argument("upper_triangular: log_diag must be [1 x m]");
  Mat R = Mat::Zero(m, m);
  int k = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) R(i, j) = uv(0, k++);
  for (int i = 0; i < m; ++i) R(i, i) = std::exp(dv(0, i));
  bool rg = t->requires_grad(strict_upper.id) || t->requires_grad(log_diag.id);
  int out = t->add_node(std::move(R), rg, nullptr);
  if (rg) {
    int ui = strict_upper.id, di = log_diag.id;
    t->set_back(out, [t, out, ui, di, m] {
      const Mat& g = t->grad_of(out);
      const Mat& R = t->value_of(out);
      Mat du(1, m * (m - 1) / 2);
      int k = 0;
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) du(0, k++) = g(i, j);
      Mat dd(1, m);
      for (int i = 0; i < m; ++i) dd(0, i) = g(i, i) * R(i, i);
      t->accum_grad(ui, du);
      t->accum_grad(di, dd);
    });
  }
  return {t, out};
}

Val prelu_logdet(Val preact, Val log_slope) {
  Tape* t = same_tape(preact, log_slope, "prelu_logdet");
  const Mat& xv = t->value_of(preact.id);
  const Mat& lsv = t->value_of(log_slope.id);
  if (lsv.rows() != 1 || lsv.cols() != 1)
    throw std::invalid_argument("prelu_logdet: log_slope must be 1x1");
  double ls = lsv(0, 0);
  Mat counts = (xv.array() < 0.0).cast<double>().rowwise().sum().matrix();
  Mat y = counts * ls;
  bool rg = t->requires_grad(preact.id) || t->requires_grad(log_slope.id);
  int out = t->add_node(std::move(y), rg, nullptr);
  if (rg) {
    int li = log_slope.id;
    Mat counts_copy = counts;
    t->set_back(out, [t, out, li, counts_copy] {
      // the count is piecewise constant in the preacts: gradient flows only
      // to the slope parameter
      double d = t->grad_of(out).col(0).dot(counts_copy.col(0));
      t->accum_grad(li, Mat::Constant(1, 1, d));
    });
  }
  return {t, out};
}

}  // namespace motctl::ad
