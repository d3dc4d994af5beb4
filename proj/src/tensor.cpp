#include "commgate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace commgate {

namespace {

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor: nonpositive dimension");
    n *= d;
  }
  return n;
}

bool track_output(Tape* tape) { return tape != nullptr; }

}  // namespace

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

TensorPtr tensor(std::vector<int> shape, bool track, std::string name) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<size_t>(shape_numel(t->shape)), 0.0);
  t->name = std::move(name);
  if (track) t->ensure_grad();
  return t;
}

TensorPtr tensor_of(std::vector<double> values, bool track, std::string name) {
  auto t = std::make_shared<Tensor>();
  t->shape = {static_cast<int>(values.size())};
  t->data = std::move(values);
  t->name = std::move(name);
  if (track) t->ensure_grad();
  return t;
}

TensorPtr zeros_like(const Tensor& t) {
  auto out = std::make_shared<Tensor>();
  out->shape = t.shape;
  out->data.assign(t.data.size(), 0.0);
  return out;
}

void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->size() != 1) throw ContractViolation("backward: loss must be scalar");
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

TensorPtr affine(Tape* tape, const TensorPtr& w, const TensorPtr& b, const TensorPtr& x) {
  if (w->shape.size() != 2 || w->cols() != x->size() || w->rows() != b->size())
    throw ConfigError("affine: dimension mismatch (" + w->name + ")");
  int m = w->rows(), n = w->cols();
  auto y = tensor({m}, track_output(tape));
  const double* wd = w->data.data();
  const double* xd = x->data.data();
  for (int r = 0; r < m; ++r) {
    const double* row = wd + static_cast<size_t>(r) * n;
    double acc = b->data[r];
    for (int c = 0; c < n; ++c) acc += row[c] * xd[c];
    y->data[r] = acc;
  }
  if (tape) {
    tape->push([w, b, x, y, m, n] {
      const double* gy = y->grad.data();
      if (w->tracked()) {
        for (int r = 0; r < m; ++r) {
          double g = gy[r];
          if (g == 0.0) continue;
          double* wrow = w->grad.data() + static_cast<size_t>(r) * n;
          const double* xd = x->data.data();
          for (int c = 0; c < n; ++c) wrow[c] += g * xd[c];
        }
      }
      if (b->tracked())
        for (int r = 0; r < m; ++r) b->grad[r] += gy[r];
      if (x->tracked()) {
        double* gx = x->grad.data();
        const double* wd = w->data.data();
        for (int r = 0; r < m; ++r) {
          double g = gy[r];
          if (g == 0.0) continue;
          const double* row = wd + static_cast<size_t>(r) * n;
          for (int c = 0; c < n; ++c) gx[c] += g * row[c];
        }
      }
    });
  }
  return y;
}

TensorPtr concat(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  auto y = tensor({a->size() + b->size()}, track_output(tape));
  std::copy(a->data.begin(), a->data.end(), y->data.begin());
  std::copy(b->data.begin(), b->data.end(), y->data.begin() + a->size());
  if (tape) {
    tape->push([a, b, y] {
      int na = a->size();
      if (a->tracked())
        for (int i = 0; i < na; ++i) a->grad[i] += y->grad[i];
      if (b->tracked())
        for (int i = 0; i < b->size(); ++i) b->grad[i] += y->grad[na + i];
    });
  }
  return y;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->size() != b->size()) throw ConfigError("add: dimension mismatch");
  auto y = tensor(a->shape, track_output(tape));
  for (int i = 0; i < a->size(); ++i) y->data[i] = a->data[i] + b->data[i];
  if (tape) {
    tape->push([a, b, y] {
      if (a->tracked())
        for (int i = 0; i < a->size(); ++i) a->grad[i] += y->grad[i];
      if (b->tracked())
        for (int i = 0; i < b->size(); ++i) b->grad[i] += y->grad[i];
    });
  }
  return y;
}

TensorPtr scale(Tape* tape, const TensorPtr& x, double factor) {
  auto y = tensor(x->shape, track_output(tape));
  for (int i = 0; i < x->size(); ++i) y->data[i] = factor * x->data[i];
  if (tape) {
    tape->push([x, y, factor] {
      if (x->tracked())
        for (int i = 0; i < x->size(); ++i) x->grad[i] += factor * y->grad[i];
    });
  }
  return y;
}

TensorPtr mean_of(Tape* tape, const std::vector<TensorPtr>& xs, int dim) {
  auto y = tensor({dim}, track_output(tape));
  if (xs.empty()) return y;
  double inv = 1.0 / static_cast<double>(xs.size());
  for (const auto& x : xs) {
    if (x->size() != dim) throw ConfigError("mean_of: dimension mismatch");
    for (int i = 0; i < dim; ++i) y->data[i] += x->data[i];
  }
  for (int i = 0; i < dim; ++i) y->data[i] *= inv;
  if (tape) {
    tape->push([xs, y, inv, dim] {
      for (const auto& x : xs) {
        if (!x->tracked()) continue;
        for (int i = 0; i < dim; ++i) x->grad[i] += inv * y->grad[i];
      }
    });
  }
  return y;
}

LstmParams LstmParams::init(int input_dim, int hidden, Rng& rng, const std::string& prefix) {
  LstmParams p;
  p.hidden = hidden;
  p.input_dim = input_dim;
  p.w_input = tensor({4 * hidden, input_dim}, true, prefix + ".w_input");
  p.w_hidden = tensor({4 * hidden, hidden}, true, prefix + ".w_hidden");
  p.bias = tensor({4 * hidden}, true, prefix + ".bias");
  init_uniform_fan_in(*p.w_input, input_dim, rng);
  init_uniform_fan_in(*p.w_hidden, hidden, rng);
  // Forget-gate bias starts at 1 so early memories persist.
  for (int i = p.hidden; i < 2 * p.hidden; ++i) p.bias->data[i] = 1.0;
  return p;
}

namespace {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

std::pair<TensorPtr, TensorPtr> lstm_step(Tape* tape, const LstmParams& p,
                                          const TensorPtr& x, const TensorPtr& h,
                                          const TensorPtr& c) {
  int hs = p.hidden;
  if (x->size() != p.input_dim || h->size() != hs || c->size() != hs)
    throw ConfigError("lstm_step: dimension mismatch");

  // pre = w_input * x + w_hidden * h + bias
  std::vector<double> pre(static_cast<size_t>(4 * hs));
  {
    const double* wi = p.w_input->data.data();
    const double* wh = p.w_hidden->data.data();
    const double* xd = x->data.data();
    const double* hd = h->data.data();
    int din = p.input_dim;
    for (int r = 0; r < 4 * hs; ++r) {
      double acc = p.bias->data[r];
      const double* ri = wi + static_cast<size_t>(r) * din;
      for (int k = 0; k < din; ++k) acc += ri[k] * xd[k];
      const double* rh = wh + static_cast<size_t>(r) * hs;
      for (int k = 0; k < hs; ++k) acc += rh[k] * hd[k];
      pre[r] = acc;
    }
  }

  auto gates = std::make_shared<std::vector<double>>(static_cast<size_t>(4 * hs));
  auto tanh_c = std::make_shared<std::vector<double>>(static_cast<size_t>(hs));
  auto h_out = tensor({hs}, track_output(tape));
  auto c_out = tensor({hs}, track_output(tape));
  for (int i = 0; i < hs; ++i) {
    double gi = sigmoid(pre[i]);
    double gf = sigmoid(pre[hs + i]);
    double gg = std::tanh(pre[2 * hs + i]);
    double go = sigmoid(pre[3 * hs + i]);
    (*gates)[i] = gi;
    (*gates)[hs + i] = gf;
    (*gates)[2 * hs + i] = gg;
    (*gates)[3 * hs + i] = go;
    double cn = gf * c->data[i] + gi * gg;
    double tc = std::tanh(cn);
    (*tanh_c)[i] = tc;
    c_out->data[i] = cn;
    h_out->data[i] = go * tc;
    if (!std::isfinite(cn) || !std::isfinite(h_out->data[i]))
      throw DivergenceError("lstm_step: non-finite activation");
  }

  if (tape) {
    LstmParams params = p;
    tape->push([params, x, h, c, h_out, c_out, gates, tanh_c, hs] {
      int din = params.input_dim;
      std::vector<double> d_pre(static_cast<size_t>(4 * hs));
      for (int i = 0; i < hs; ++i) {
        double gi = (*gates)[i], gf = (*gates)[hs + i];
        double gg = (*gates)[2 * hs + i], go = (*gates)[3 * hs + i];
        double tc = (*tanh_c)[i];
        double dh = h_out->grad[i];
        double dc = c_out->grad[i] + dh * go * (1.0 - tc * tc);
        d_pre[i] = dc * gg * gi * (1.0 - gi);
        d_pre[hs + i] = dc * c->data[i] * gf * (1.0 - gf);
        d_pre[2 * hs + i] = dc * gi * (1.0 - gg * gg);
        d_pre[3 * hs + i] = dh * tc * go * (1.0 - go);
        if (c->tracked()) c->grad[i] += dc * gf;
      }
      if (params.bias->tracked())
        for (int r = 0; r < 4 * hs; ++r) params.bias->grad[r] += d_pre[r];
      if (params.w_input->tracked()) {
        for (int r = 0; r < 4 * hs; ++r) {
          double g = d_pre[r];
          if (g == 0.0) continue;
          double* row = params.w_input->grad.data() + static_cast<size_t>(r) * din;
          for (int k = 0; k < din; ++k) row[k] += g * x->data[k];
        }
      }
      if (params.w_hidden->tracked()) {
        for (int r = 0; r < 4 * hs; ++r) {
          double g = d_pre[r];
          if (g == 0.0) continue;
          double* row = params.w_hidden->grad.data() + static_cast<size_t>(r) * hs;
          for (int k = 0; k < hs; ++k) row[k] += g * h->data[k];
        }
      }
      if (x->tracked()) {
        const double* wi = params.w_input->data.data();
        for (int r = 0; r < 4 * hs; ++r) {
          double g = d_pre[r];
          if (g == 0.0) continue;
          const double* row = wi + static_cast<size_t>(r) * din;
          for (int k = 0; k < din; ++k) x->grad[k] += g * row[k];
        }
      }
      if (h->tracked()) {
        const double* wh = params.w_hidden->data.data();
        for (int r = 0; r < 4 * hs; ++r) {
          double g = d_pre[r];
          if (g == 0.0) continue;
          const double* row = wh + static_cast<size_t>(r) * hs;
          for (int k = 0; k < hs; ++k) h->grad[k] += g * row[k];
        }
      }
    });
  }
  return {h_out, c_out};
}

namespace {

void stable_softmax(const std::vector<double>& z, std::vector<double>& p) {
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  p.resize(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
}

}  // namespace

TensorPtr softmax(Tape* tape, const TensorPtr& logits) {
  auto y = tensor(logits->shape, track_output(tape));
  std::vector<double> p;
  stable_softmax(logits->data, p);
  y->data = p;
  if (tape) {
    tape->push([logits, y] {
      if (!logits->tracked()) return;
      int n = y->size();
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += y->grad[i] * y->data[i];
      for (int i = 0; i < n; ++i) logits->grad[i] += y->data[i] * (y->grad[i] - dot);
    });
  }
  return y;
}

TensorPtr log_prob_index(Tape* tape, const TensorPtr& logits, int index) {
  if (index < 0 || index >= logits->size())
    throw ContractViolation("log_prob_index: index out of range");
  std::vector<double> p;
  stable_softmax(logits->data, p);
  auto y = tensor({1}, track_output(tape));
  y->data[0] = std::log(std::max(p[static_cast<size_t>(index)], 1e-300));
  if (tape) {
    auto probs = std::make_shared<std::vector<double>>(std::move(p));
    tape->push([logits, y, probs, index] {
      if (!logits->tracked()) return;
      double g = y->grad[0];
      for (int i = 0; i < logits->size(); ++i)
        logits->grad[i] += g * ((i == index ? 1.0 : 0.0) - (*probs)[i]);
    });
  }
  return y;
}

TensorPtr entropy(Tape* tape, const TensorPtr& logits) {
  std::vector<double> p;
  stable_softmax(logits->data, p);
  auto y = tensor({1}, track_output(tape));
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  y->data[0] = h;
  if (tape) {
    auto probs = std::make_shared<std::vector<double>>(std::move(p));
    auto ent = h;
    tape->push([logits, y, probs, ent] {
      if (!logits->tracked()) return;
      double g = y->grad[0];
      // dH/dz_i = -p_i (log p_i + H)
      for (int i = 0; i < logits->size(); ++i) {
        double pi = (*probs)[i];
        double lp = pi > 0.0 ? std::log(pi) : 0.0;
        logits->grad[i] += g * (-pi * (lp + ent));
      }
    });
  }
  return y;
}

TensorPtr distance_logits(Tape* tape, const TensorPtr& m, const TensorPtr& bank, double tau) {
  if (tau <= 0.0) throw ConfigError("distance_logits: temperature must be positive");
  int n = bank->rows(), d = bank->cols();
  if (m->size() != d) throw ConfigError("distance_logits: dimension mismatch");
  auto y = tensor({n}, track_output(tape));
  for (int k = 0; k < n; ++k) {
    const double* row = bank->data.data() + static_cast<size_t>(k) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      double diff = m->data[j] - row[j];
      s += diff * diff;
    }
    y->data[k] = -s / tau;
  }
  if (tape) {
    tape->push([m, bank, y, tau, n, d] {
      for (int k = 0; k < n; ++k) {
        double g = y->grad[k];
        if (g == 0.0) continue;
        const double* row = bank->data.data() + static_cast<size_t>(k) * d;
        double coef = -2.0 * g / tau;
        if (m->tracked())
          for (int j = 0; j < d; ++j) m->grad[j] += coef * (m->data[j] - row[j]);
        if (bank->tracked()) {
          double* grow = bank->grad.data() + static_cast<size_t>(k) * d;
          for (int j = 0; j < d; ++j) grow[j] -= coef * (m->data[j] - row[j]);
        }
      }
    });
  }
  return y;
}

TensorPtr st_onehot(Tape* tape, const TensorPtr& logits, double temperature,
                    const std::vector<double>& noise, int hard_index, bool soft_forward) {
  if (temperature <= 0.0) throw ConfigError("st_onehot: temperature must be positive");
  int n = logits->size();
  if (static_cast<int>(noise.size()) != n)
    throw ContractViolation("st_onehot: noise size mismatch");
  if (hard_index < 0 || hard_index >= n)
    throw ContractViolation("st_onehot: hard index out of range");
  std::vector<double> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z[i] = (logits->data[i] + noise[i]) / temperature;
  std::vector<double> soft;
  stable_softmax(z, soft);

  auto y = tensor({n}, track_output(tape));
  if (soft_forward) {
    y->data = soft;
  } else {
    y->data[hard_index] = 1.0;
  }
  if (tape) {
    auto sp = std::make_shared<std::vector<double>>(std::move(soft));
    tape->push([logits, y, sp, temperature, n] {
      if (!logits->tracked()) return;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += y->grad[i] * (*sp)[i];
      for (int i = 0; i < n; ++i)
        logits->grad[i] += (*sp)[i] * (y->grad[i] - dot) / temperature;
    });
  }
  return y;
}

TensorPtr rows_combo(Tape* tape, const TensorPtr& bank, const TensorPtr& w) {
  int n = bank->rows(), d = bank->cols();
  if (w->size() != n) throw ConfigError("rows_combo: dimension mismatch");
  auto y = tensor({d}, track_output(tape));

  int onehot_index = -1;
  for (int k = 0; k < n; ++k) {
    double v = w->data[k];
    if (v == 1.0 && onehot_index < 0)
      onehot_index = k;
    else if (v != 0.0) {
      onehot_index = -2;
      break;
    }
  }
  if (onehot_index >= 0) {
    // Exact one-hot: copy the row so the message is bitwise a codebook row.
    const double* row = bank->data.data() + static_cast<size_t>(onehot_index) * d;
    std::copy(row, row + d, y->data.begin());
  } else {
    for (int k = 0; k < n; ++k) {
      double v = w->data[k];
      if (v == 0.0) continue;
      const double* row = bank->data.data() + static_cast<size_t>(k) * d;
      for (int j = 0; j < d; ++j) y->data[j] += v * row[j];
    }
  }
  if (tape) {
    tape->push([bank, w, y, n, d] {
      if (w->tracked()) {
        for (int k = 0; k < n; ++k) {
          const double* row = bank->data.data() + static_cast<size_t>(k) * d;
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += row[j] * y->grad[j];
          w->grad[k] += acc;
        }
      }
      if (bank->tracked()) {
        for (int k = 0; k < n; ++k) {
          double v = w->data[k];
          if (v == 0.0) continue;
          double* grow = bank->grad.data() + static_cast<size_t>(k) * d;
          for (int j = 0; j < d; ++j) grow[j] += v * y->grad[j];
        }
      }
    });
  }
  return y;
}

TensorPtr square_error(Tape* tape, const TensorPtr& v, double target) {
  if (v->size() != 1) throw ContractViolation("square_error: expected scalar");
  auto y = tensor({1}, track_output(tape));
  double diff = target - v->data[0];
  y->data[0] = diff * diff;
  if (tape) {
    tape->push([v, y, target] {
      if (!v->tracked()) return;
      v->grad[0] += y->grad[0] * 2.0 * (v->data[0] - target);
    });
  }
  return y;
}

TensorPtr weighted_sum(Tape* tape, const std::vector<std::pair<TensorPtr, double>>& terms) {
  auto y = tensor({1}, track_output(tape));
  double acc = 0.0;
  for (const auto& [t, coef] : terms) {
    if (t->size() != 1) throw ContractViolation("weighted_sum: expected scalar terms");
    acc += coef * t->data[0];
  }
  y->data[0] = acc;
  if (tape) {
    tape->push([terms, y] {
      double g = y->grad[0];
      for (const auto& [t, coef] : terms)
        if (t->tracked()) t->grad[0] += coef * g;
    });
  }
  return y;
}

int argmax(const Tensor& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v.data[i] > v.data[best]) best = i;
  return best;
}

int sample_categorical(const Tensor& logits, Rng& rng) {
  std::vector<double> p;
  stable_softmax(logits.data, p);
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

double log_softmax_at(const Tensor& logits, int index) {
  std::vector<double> p;
  stable_softmax(logits.data, p);
  return std::log(std::max(p[static_cast<size_t>(index)], 1e-300));
}

}  // namespace commgate
