#include "tinytrack/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace tinytrack::ad {

namespace {

std::atomic<long long> g_seq{0};
thread_local int g_no_grad_depth = 0;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (grad_enabled() && any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

void Node::add_grad(const Tensor& g) {
  if (!has_grad()) grad = Tensor(value.shape);
  for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += g.v[i];
}

void Node::add_grad_at(size_t index, double g) {
  if (!has_grad()) grad = Tensor(value.shape);
  grad.v[index] += g;
}

Var leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  node->requires_grad = grad_enabled();
  return node;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  node->requires_grad = false;
  return node;
}

Var scalar_constant(double value) { return constant(Tensor::scalar(value)); }

NoGradGuard::NoGradGuard() : previous_(g_no_grad_depth > 0) { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

void backward(const Var& root) {
  if (root->value.size() != 1) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  if (!root->requires_grad) return;

  // Reverse-topological order = decreasing creation sequence, since every
  // node is created after its parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root->add_grad_at(0, 1.0);
  for (Node* n : order) {
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->add_grad(self.grad);
    if (b->requires_grad) b->add_grad(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->value.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->add_grad(self.grad);
    if (b->requires_grad) {
      if (!b->has_grad()) b->grad = Tensor(b->value.shape);
      for (size_t i = 0; i < b->grad.v.size(); ++i) b->grad.v[i] -= self.grad.v[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->value.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      if (!a->has_grad()) a->grad = Tensor(a->value.shape);
      for (size_t i = 0; i < a->grad.v.size(); ++i)
        a->grad.v[i] += self.grad.v[i] * b->value.v[i];
    }
    if (b->requires_grad) {
      if (!b->has_grad()) b->grad = Tensor(b->value.shape);
      for (size_t i = 0; i < b->grad.v.size(); ++i)
        b->grad.v[i] += self.grad.v[i] * a->value.v[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& x : out.v) x *= s;
  return make_node(std::move(out), {a}, [a, s](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += s * self.grad.v[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (auto& x : out.v) x += s;
  return make_node(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad) a->add_grad(self.grad);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a->value.sum());
  return make_node(std::move(out), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad.v[0];
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (auto& x : a->grad.v) x += g;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value.size())); }

Var square_sum(const Var& a) {
  double acc = 0.0;
  for (double x : a->value.v) acc += x * x;
  return make_node(Tensor::scalar(acc), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad.v[0];
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i)
      a->grad.v[i] += 2.0 * g * a->value.v[i];
  });
}

Var abs_sum(const Var& a) {
  double acc = 0.0;
  for (double x : a->value.v) acc += std::abs(x);
  return make_node(Tensor::scalar(acc), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad.v[0];
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      const double x = a->value.v[i];
      a->grad.v[i] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var dot(const Var& a, const Tensor& w) {
  if (!a->value.same_shape(w)) throw std::invalid_argument("dot: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < w.v.size(); ++i) acc += a->value.v[i] * w.v[i];
  Tensor weights = w;
  return make_node(Tensor::scalar(acc), {a}, [a, weights](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad.v[0];
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += g * weights.v[i];
  });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var leaky_relu(const Var& a, double slope) {
  Tensor out = a->value;
  for (auto& x : out.v) x = x > 0.0 ? x : slope * x;
  return make_node(std::move(out), {a}, [a, slope](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      a->grad.v[i] += self.grad.v[i] * (a->value.v[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Var l2_normalize(const Var& a, double eps) {
  double norm2 = 0.0;
  for (double x : a->value.v) norm2 += x * x;
  const double norm = std::max(std::sqrt(norm2), eps);
  Tensor out = a->value;
  for (auto& x : out.v) x /= norm;
  return make_node(std::move(out), {a}, [a, norm](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    double vg = 0.0;
    for (size_t i = 0; i < a->value.v.size(); ++i) vg += a->value.v[i] * self.grad.v[i];
    const double inv = 1.0 / norm;
    const double inv3 = inv * inv * inv;
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      a->grad.v[i] += self.grad.v[i] * inv - a->value.v[i] * vg * inv3;
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (auto& x : out.v) {
    if (x >= 0.0) {
      x = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      x = e / (1.0 + e);
    }
  }
  const Tensor saved = out;
  return make_node(std::move(out), {a}, [a, saved](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      const double s = saved.v[i];
      a->grad.v[i] += self.grad.v[i] * s * (1.0 - s);
    }
  });
}

Var log_(const Var& a) {
  Tensor out = a->value;
  for (auto& x : out.v) x = std::log(x);
  return make_node(std::move(out), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      a->grad.v[i] += self.grad.v[i] / a->value.v[i];
    }
  });
}

Var exp_(const Var& a) {
  Tensor out = a->value;
  for (auto& x : out.v) x = std::exp(x);
  const Tensor saved = out;
  return make_node(std::move(out), {a}, [a, saved](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      a->grad.v[i] += self.grad.v[i] * saved.v[i];
    }
  });
}

Var logsumexp(const Var& a) {
  double m = a->value.v[0];
  for (double x : a->value.v) m = std::max(m, x);
  double acc = 0.0;
  for (double x : a->value.v) acc += std::exp(x - m);
  const double lse = m + std::log(acc);
  return make_node(Tensor::scalar(lse), {a}, [a, m, acc](Node& self) {
    if (!a->requires_grad) return;
    const double g = self.grad.v[0];
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) {
      a->grad.v[i] += g * std::exp(a->value.v[i] - m) / acc;
    }
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::count(shape) != a->value.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  Tensor out(std::move(shape), a->value.v);
  return make_node(std::move(out), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    if (!a->has_grad()) a->grad = Tensor(a->value.shape);
    for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += self.grad.v[i];
  });
}

Var stack_scalars(std::span<const Var> parts) {
  Tensor out({static_cast<int>(parts.size())});
  std::vector<Var> parents(parts.begin(), parts.end());
  for (size_t i = 0; i < parts.size(); ++i) {
    if (parts[i]->value.size() != 1) {
      throw std::invalid_argument("stack_scalars: every part must be scalar");
    }
    out.v[i] = parts[i]->value.v[0];
  }
  return make_node(std::move(out), parents, [parents](Node& self) {
    for (size_t i = 0; i < parents.size(); ++i) {
      if (parents[i]->requires_grad) parents[i]->add_grad_at(0, self.grad.v[i]);
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  if (a->value.rank() != 3 || b->value.rank() != 3 ||
      a->value.dim(1) != b->value.dim(1) || a->value.dim(2) != b->value.dim(2)) {
    throw std::invalid_argument("concat_channels: incompatible shapes");
  }
  Tensor out({a->value.dim(0) + b->value.dim(0), a->value.dim(1), a->value.dim(2)});
  std::copy(a->value.v.begin(), a->value.v.end(), out.v.begin());
  std::copy(b->value.v.begin(), b->value.v.end(),
            out.v.begin() + static_cast<long>(a->value.v.size()));
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    const size_t na = a->value.v.size();
    if (a->requires_grad) {
      if (!a->has_grad()) a->grad = Tensor(a->value.shape);
      for (size_t i = 0; i < na; ++i) a->grad.v[i] += self.grad.v[i];
    }
    if (b->requires_grad) {
      if (!b->has_grad()) b->grad = Tensor(b->value.shape);
      for (size_t i = 0; i < b->grad.v.size(); ++i) b->grad.v[i] += self.grad.v[na + i];
    }
  });
}

// ---- layers ----

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const int in = x->value.dim(0);
  const int out_dim = weight->value.dim(0);
  if (weight->value.rank() != 2 || weight->value.dim(1) != in ||
      bias->value.size() != out_dim) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Tensor out({out_dim});
  for (int o = 0; o < out_dim; ++o) {
    double acc = bias->value.v[static_cast<size_t>(o)];
    const size_t row = static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += weight->value.v[row + i] * x->value.v[static_cast<size_t>(i)];
    out.v[static_cast<size_t>(o)] = acc;
  }
  return make_node(std::move(out), {x, weight, bias}, [x, weight, bias](Node& self) {
    const int in = x->value.dim(0);
    const int out_dim = weight->value.dim(0);
    if (x->requires_grad && !x->has_grad()) x->grad = Tensor(x->value.shape);
    if (weight->requires_grad && !weight->has_grad()) weight->grad = Tensor(weight->value.shape);
    if (bias->requires_grad && !bias->has_grad()) bias->grad = Tensor(bias->value.shape);
    for (int o = 0; o < out_dim; ++o) {
      const double g = self.grad.v[static_cast<size_t>(o)];
      if (g == 0.0) continue;
      const size_t row = static_cast<size_t>(o) * in;
      if (bias->requires_grad) bias->grad.v[static_cast<size_t>(o)] += g;
      for (int i = 0; i < in; ++i) {
        if (x->requires_grad) x->grad.v[static_cast<size_t>(i)] += g * weight->value.v[row + i];
        if (weight->requires_grad) weight->grad.v[row + i] += g * x->value.v[static_cast<size_t>(i)];
      }
    }
  });
}

Var conv(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  Tensor out = conv2d(x->value, weight->value, bias ? &bias->value : nullptr, stride, pad);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), parents, [x, weight, bias, stride, pad](Node& self) {
    if (x->requires_grad) {
      x->add_grad(conv2d_grad_input(self.grad, weight->value, stride, pad,
                                    x->value.dim(1), x->value.dim(2)));
    }
    if (weight->requires_grad) {
      weight->add_grad(conv2d_grad_weight(x->value, self.grad, weight->value.shape,
                                          stride, pad));
    }
    if (bias && bias->requires_grad) {
      if (!bias->has_grad()) bias->grad = Tensor(bias->value.shape);
      const int cout = self.grad.dim(0);
      const long long per = self.grad.size() / cout;
      for (int c = 0; c < cout; ++c) {
        double acc = 0.0;
        for (long long i = 0; i < per; ++i) acc += self.grad.v[static_cast<size_t>(c * per + i)];
        bias->grad.v[static_cast<size_t>(c)] += acc;
      }
    }
  });
}

// ---- prpool ----

namespace {

struct BilinearTap {
  int x0, y0;
  double tx, ty;
  double v00, v10, v01, v11;
};

BilinearTap bilinear_setup(const Tensor& feat, int c, double u, double v) {
  const int h = feat.dim(1), w = feat.dim(2);
  const double fx = u - 0.5;
  const double fy = v - 0.5;
  BilinearTap t;
  t.x0 = static_cast<int>(std::floor(fx));
  t.y0 = static_cast<int>(std::floor(fy));
  t.tx = fx - t.x0;
  t.ty = fy - t.y0;
  auto cl = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return feat.at3(c, y, x);
  };
  t.v00 = cl(t.x0, t.y0);
  t.v10 = cl(t.x0 + 1, t.y0);
  t.v01 = cl(t.x0, t.y0 + 1);
  t.v11 = cl(t.x0 + 1, t.y0 + 1);
  return t;
}

}  // namespace

Var prpool(const Var& feat, const Var& box, int bins, int samples) {
  if (feat->value.rank() != 3) throw std::invalid_argument("prpool: feat must be [C,H,W]");
  if (box->value.size() != 4) throw std::invalid_argument("prpool: box must be (x1,y1,x2,y2)");
  const double x1 = box->value.v[0], y1 = box->value.v[1];
  const double x2 = box->value.v[2], y2 = box->value.v[3];
  if (!(x2 > x1) || !(y2 > y1)) {
    throw std::invalid_argument("prpool: box must have positive area");
  }
  const int c_dim = feat->value.dim(0);
  Tensor out({c_dim, bins, bins});
  const double bw = (x2 - x1) / bins;
  const double bh = (y2 - y1) / bins;
  const double inv_n = 1.0 / (samples * samples);
  for (int by = 0; by < bins; ++by) {
    for (int bx = 0; bx < bins; ++bx) {
      for (int sy = 0; sy < samples; ++sy) {
        const double v = y1 + (by + (sy + 0.5) / samples) * bh;
        for (int sx = 0; sx < samples; ++sx) {
          const double u = x1 + (bx + (sx + 0.5) / samples) * bw;
          for (int c = 0; c < c_dim; ++c) {
            const BilinearTap t = bilinear_setup(feat->value, c, u, v);
            const double val = (1 - t.ty) * ((1 - t.tx) * t.v00 + t.tx * t.v10) +
                               t.ty * ((1 - t.tx) * t.v01 + t.tx * t.v11);
            out.at3(c, by, bx) += val * inv_n;
          }
        }
      }
    }
  }
  return make_node(std::move(out), {feat, box},
                   [feat, box, bins, samples](Node& self) {
    const double x1 = box->value.v[0], y1 = box->value.v[1];
    const double x2 = box->value.v[2], y2 = box->value.v[3];
    const int c_dim = feat->value.dim(0);
    const int h = feat->value.dim(1), w = feat->value.dim(2);
    const double inv_n = 1.0 / (samples * samples);
    if (feat->requires_grad && !feat->has_grad()) feat->grad = Tensor(feat->value.shape);
    if (box->requires_grad && !box->has_grad()) box->grad = Tensor(box->value.shape);
    for (int by = 0; by < bins; ++by) {
      for (int bx = 0; bx < bins; ++bx) {
        for (int sy = 0; sy < samples; ++sy) {
          const double ry = (by + (sy + 0.5) / samples) / bins;
          const double v = y1 + ry * (y2 - y1);
          for (int sx = 0; sx < samples; ++sx) {
            const double rx = (bx + (sx + 0.5) / samples) / bins;
            const double u = x1 + rx * (x2 - x1);
            for (int c = 0; c < c_dim; ++c) {
              const double g = self.grad.at3(c, by, bx) * inv_n;
              if (g == 0.0) continue;
              const BilinearTap t = bilinear_setup(feat->value, c, u, v);
              if (feat->requires_grad) {
                const int xa = std::clamp(t.x0, 0, w - 1);
                const int xb = std::clamp(t.x0 + 1, 0, w - 1);
                const int ya = std::clamp(t.y0, 0, h - 1);
                const int yb = std::clamp(t.y0 + 1, 0, h - 1);
                feat->grad.at3(c, ya, xa) += g * (1 - t.tx) * (1 - t.ty);
                feat->grad.at3(c, ya, xb) += g * t.tx * (1 - t.ty);
                feat->grad.at3(c, yb, xa) += g * (1 - t.tx) * t.ty;
                feat->grad.at3(c, yb, xb) += g * t.tx * t.ty;
              }
              if (box->requires_grad) {
                const double dval_du = (1 - t.ty) * (t.v10 - t.v00) + t.ty * (t.v11 - t.v01);
                const double dval_dv = (1 - t.tx) * (t.v01 - t.v00) + t.tx * (t.v11 - t.v10);
                box->grad.v[0] += g * dval_du * (1.0 - rx);
                box->grad.v[2] += g * dval_du * rx;
                box->grad.v[1] += g * dval_dv * (1.0 - ry);
                box->grad.v[3] += g * dval_dv * ry;
              }
            }
          }
        }
      }
    }
  });
}

Var hinge_residual(const Var& score, const Tensor& label, double mask_threshold) {
  if (!score->value.same_shape(label)) {
    throw std::invalid_argument("hinge_residual: score/label shape mismatch");
  }
  Tensor out = score->value;
  for (size_t i = 0; i < out.v.size(); ++i) {
    if (label.v[i] > mask_threshold) {
      out.v[i] = score->value.v[i] - label.v[i];
    } else {
      out.v[i] = std::max(0.0, score->value.v[i]);
    }
  }
  Tensor label_copy = label;
  return make_node(std::move(out), {score},
                   [score, label_copy, mask_threshold](Node& self) {
    if (!score->requires_grad) return;
    if (!score->has_grad()) score->grad = Tensor(score->value.shape);
    for (size_t i = 0; i < score->grad.v.size(); ++i) {
      double d;
      if (label_copy.v[i] > mask_threshold) {
        d = 1.0;
      } else {
        d = score->value.v[i] > 0.0 ? 1.0 : 0.0;
      }
      score->grad.v[i] += self.grad.v[i] * d;
    }
  });
}

void zero_grads(std::span<Param> params) {
  for (auto& p : params) p.var->zero_grad();
}

void Adam::step(std::span<Param> params, double lr_scale) {
  if (slots_.size() != params.size()) {
    slots_.assign(params.size(), {});
  }
  ++t_;
  const double lr = lr_ * lr_scale;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& param = *params[pi].var;
    if (!param.has_grad()) continue;
    auto& slot = slots_[pi];
    if (slot.m.v.empty()) {
      slot.m = Tensor(param.value.shape);
      slot.v = Tensor(param.value.shape);
    }
    for (size_t i = 0; i < param.value.v.size(); ++i) {
      const double g = param.grad.v[i];
      slot.m.v[i] = beta1_ * slot.m.v[i] + (1.0 - beta1_) * g;
      slot.v.v[i] = beta2_ * slot.v.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = slot.m.v[i] / bc1;
      const double vhat = slot.v.v[i] / bc2;
      param.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    param.zero_grad();
  }
}

}  // namespace tinytrack::ad
