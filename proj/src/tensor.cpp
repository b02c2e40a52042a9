#include "repq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "repq/errors.hpp"
#include "repq/kernels.hpp"

namespace repq {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ParamError("tensor: " + what);
}

}  // namespace

Tensor Tensor::from(std::size_t r, std::size_t c, std::vector<double> v) {
  require(v.size() == r * c, "from(): value count does not match shape");
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::move(v);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tape::Id Tape::push(Tensor value, bool needs_grad, std::string name) {
  Node nd;
  nd.value = std::move(value);
  nd.needs_grad = needs_grad;
  nd.name = std::move(name);
  nodes_.push_back(std::move(nd));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Node& Tape::node(Id id) {
  require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(),
          "invalid node id");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tape::Node& Tape::node(Id id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(),
          "invalid node id");
  return nodes_[static_cast<std::size_t>(id)];
}

Tensor& Tape::grad_buf(Id id) {
  Node& nd = node(id);
  if (nd.grad.numel() == 0)
    nd.grad = Tensor(nd.value.rows, nd.value.cols);
  return nd.grad;
}

const Tensor& Tape::value(Id id) const { return node(id).value; }
const std::string& Tape::name(Id id) const { return node(id).name; }
const Tensor& Tape::grad(Id id) const { return node(id).grad; }
bool Tape::has_grad(Id id) const { return node(id).grad.numel() != 0; }

Tape::Id Tape::leaf(Tensor v, bool needs_grad, std::string name) {
  require(v.numel() > 0, "leaf(): empty tensor");
  return push(std::move(v), needs_grad, std::move(name));
}

Tape::Id Tape::matmul(Id a, Id b, bool trans_a, bool trans_b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  const std::size_t m = trans_a ? av.cols : av.rows;
  const std::size_t k = trans_a ? av.rows : av.cols;
  const std::size_t kb = trans_b ? bv.cols : bv.rows;
  const std::size_t n = trans_b ? bv.rows : bv.cols;
  require(k == kb, "matmul(): inner dimensions disagree");
  Tensor out(m, n);
  kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, n, k,
                  trans_a, trans_b, false);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y, m, n, k, trans_a, trans_b] {
      const double* dy = node(y).grad.data.data();
      const double* avd = node(a).value.data.data();
      const double* bvd = node(b).value.data.data();
      const int mode = (trans_a ? 2 : 0) | (trans_b ? 1 : 0);
      if (node(a).needs_grad) {
        double* da = grad_buf(a).data.data();
        switch (mode) {
          case 0: kernels::matmul(dy, bvd, da, m, k, n, false, true, true); break;
          case 1: kernels::matmul(dy, bvd, da, m, k, n, false, false, true); break;
          case 2: kernels::matmul(bvd, dy, da, k, m, n, false, true, true); break;
          case 3: kernels::matmul(bvd, dy, da, k, m, n, true, true, true); break;
        }
      }
      if (node(b).needs_grad) {
        double* db = grad_buf(b).data.data();
        switch (mode) {
          case 0: kernels::matmul(avd, dy, db, k, n, m, true, false, true); break;
          case 1: kernels::matmul(dy, avd, db, n, k, m, true, false, true); break;
          case 2: kernels::matmul(avd, dy, db, k, n, m, false, false, true); break;
          case 3: kernels::matmul(dy, avd, db, n, k, m, true, true, true); break;
        }
      }
    };
  }
  return y;
}

Tape::Id Tape::bmm(Id a, Id b, std::size_t batch, bool trans_a, bool trans_b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(batch > 0 && av.rows % batch == 0 && bv.rows % batch == 0,
          "bmm(): row counts not divisible by batch");
  const std::size_t ar = av.rows / batch, ac = av.cols;
  const std::size_t br = bv.rows / batch, bc = bv.cols;
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  const std::size_t kb = trans_b ? bc : br;
  const std::size_t n = trans_b ? br : bc;
  require(k == kb, "bmm(): inner dimensions disagree");
  Tensor out(batch * m, n);
  kernels::bmm(av.data.data(), bv.data.data(), out.data.data(), batch, m, n, k,
               trans_a, trans_b, false);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y, batch, m, n, k, trans_a, trans_b] {
      const double* dy = node(y).grad.data.data();
      const double* avd = node(a).value.data.data();
      const double* bvd = node(b).value.data.data();
      const int mode = (trans_a ? 2 : 0) | (trans_b ? 1 : 0);
      if (node(a).needs_grad) {
        double* da = grad_buf(a).data.data();
        switch (mode) {
          case 0: kernels::bmm(dy, bvd, da, batch, m, k, n, false, true, true); break;
          case 1: kernels::bmm(dy, bvd, da, batch, m, k, n, false, false, true); break;
          case 2: kernels::bmm(bvd, dy, da, batch, k, m, n, false, true, true); break;
          case 3: kernels::bmm(bvd, dy, da, batch, k, m, n, true, true, true); break;
        }
      }
      if (node(b).needs_grad) {
        double* db = grad_buf(b).data.data();
        switch (mode) {
          case 0: kernels::bmm(avd, dy, db, batch, k, n, m, true, false, true); break;
          case 1: kernels::bmm(dy, avd, db, batch, n, k, m, true, false, true); break;
          case 2: kernels::bmm(avd, dy, db, batch, k, n, m, false, false, true); break;
          case 3: kernels::bmm(dy, avd, db, batch, n, k, m, true, true, true); break;
        }
      }
    };
  }
  return y;
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(av.rows == bv.rows && av.cols == bv.cols, "add(): shape mismatch");
  Tensor out(av.rows, av.cols);
  kernels::add(av.data.data(), bv.data.data(), out.data.data(), out.numel());
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y] {
      const Tensor& dy = node(y).grad;
      if (node(a).needs_grad)
        kernels::axpy(1.0, dy.data.data(), grad_buf(a).data.data(), dy.numel());
      if (node(b).needs_grad)
        kernels::axpy(1.0, dy.data.data(), grad_buf(b).data.data(), dy.numel());
    };
  }
  return y;
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(av.rows == bv.rows && av.cols == bv.cols, "sub(): shape mismatch");
  Tensor out(av.rows, av.cols);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = av.data[i] - bv.data[i];
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y] {
      const Tensor& dy = node(y).grad;
      if (node(a).needs_grad)
        kernels::axpy(1.0, dy.data.data(), grad_buf(a).data.data(), dy.numel());
      if (node(b).needs_grad)
        kernels::axpy(-1.0, dy.data.data(), grad_buf(b).data.data(), dy.numel());
    };
  }
  return y;
}

Tape::Id Tape::hadamard(Id a, Id b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(av.rows == bv.rows && av.cols == bv.cols,
          "hadamard(): shape mismatch");
  Tensor out(av.rows, av.cols);
  kernels::hadamard(av.data.data(), bv.data.data(), out.data.data(),
                    out.numel());
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y] {
      const Tensor& dy = node(y).grad;
      if (node(a).needs_grad) {
        double* da = grad_buf(a).data.data();
        const double* bd = node(b).value.data.data();
        for (std::size_t i = 0; i < dy.numel(); ++i)
          da[i] += dy.data[i] * bd[i];
      }
      if (node(b).needs_grad) {
        double* db = grad_buf(b).data.data();
        const double* ad = node(a).value.data.data();
        for (std::size_t i = 0; i < dy.numel(); ++i)
          db[i] += dy.data[i] * ad[i];
      }
    };
  }
  return y;
}

Tape::Id Tape::scale(Id x, double alpha) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  kernels::scale(xv.data.data(), alpha, out.data.data(), out.numel());
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y, alpha] {
      const Tensor& dy = node(y).grad;
      kernels::axpy(alpha, dy.data.data(), grad_buf(x).data.data(),
                    dy.numel());
    };
  }
  return y;
}

Tape::Id Tape::add_bias_rows(Id x, Id bias) {
  const Tensor& xv = node(x).value;
  const Tensor& bv = node(bias).value;
  require(bv.rows == 1 && bv.cols == xv.cols,
          "add_bias_rows(): bias must be [1, cols]");
  Tensor out(xv.rows, xv.cols);
  kernels::add_bias_rows(xv.data.data(), bv.data.data(), out.data.data(),
                         xv.rows, xv.cols);
  const bool ng = node(x).needs_grad || node(bias).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, bias, y] {
      const Tensor& dy = node(y).grad;
      if (node(x).needs_grad)
        kernels::axpy(1.0, dy.data.data(), grad_buf(x).data.data(),
                      dy.numel());
      if (node(bias).needs_grad) {
        double* db = grad_buf(bias).data.data();
        for (std::size_t r = 0; r < dy.rows; ++r)
          for (std::size_t j = 0; j < dy.cols; ++j)
            db[j] += dy.at(r, j);
      }
    };
  }
  return y;
}

Tape::Id Tape::sigmoid(Id x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  kernels::sigmoid(xv.data.data(), out.data.data(), out.numel());
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& yv = node(y).value;
      double* dx = grad_buf(x).data.data();
      for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] += dy.data[i] * yv.data[i] * (1.0 - yv.data[i]);
    };
  }
  return y;
}

Tape::Id Tape::tanh(Id x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  kernels::tanh(xv.data.data(), out.data.data(), out.numel());
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& yv = node(y).value;
      double* dx = grad_buf(x).data.data();
      for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] += dy.data[i] * (1.0 - yv.data[i] * yv.data[i]);
    };
  }
  return y;
}

Tape::Id Tape::relu(Id x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  kernels::relu(xv.data.data(), out.data.data(), out.numel());
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& xin = node(x).value;
      double* dx = grad_buf(x).data.data();
      for (std::size_t i = 0; i < dy.numel(); ++i)
        if (xin.data[i] > 0.0) dx[i] += dy.data[i];
    };
  }
  return y;
}

Tape::Id Tape::softmax_rows(Id x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  kernels::softmax_rows(xv.data.data(), out.data.data(), xv.rows, xv.cols);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& yv = node(y).value;
      double* dx = grad_buf(x).data.data();
      for (std::size_t r = 0; r < dy.rows; ++r) {
        const double* dyr = dy.data.data() + r * dy.cols;
        const double* yr = yv.data.data() + r * dy.cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < dy.cols; ++j) dot += dyr[j] * yr[j];
        double* dxr = dx + r * dy.cols;
        for (std::size_t j = 0; j < dy.cols; ++j)
          dxr[j] += yr[j] * (dyr[j] - dot);
      }
    };
  }
  return y;
}

Tape::Id Tape::im2col(Id x, std::size_t windows, std::size_t len,
                      std::size_t channels, std::size_t kernel) {
  const Tensor& xv = node(x).value;
  require(kernel % 2 == 1, "im2col(): kernel must be odd");
  require(xv.rows == windows * len && xv.cols == channels,
          "im2col(): input is not [windows*len, channels]");
  Tensor out(windows * len, kernel * channels);
  kernels::im2col1d(xv.data.data(), out.data.data(), windows, len, channels,
                    kernel);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y, windows, len, channels, kernel] {
      const Tensor& dy = node(y).grad;
      kernels::col2im1d(dy.data.data(), grad_buf(x).data.data(), windows, len,
                        channels, kernel);
    };
  }
  return y;
}

Tape::Id Tape::maxpool(Id x, std::size_t windows, std::size_t len,
                       std::size_t channels) {
  const Tensor& xv = node(x).value;
  require(len >= 2, "maxpool(): window length must be >= 2");
  require(xv.rows == windows * len && xv.cols == channels,
          "maxpool(): input is not [windows*len, channels]");
  const std::size_t out_len = len / 2;
  Tensor out(windows * out_len, channels);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
  kernels::maxpool1d(xv.data.data(), out.data.data(), argmax->data(), windows,
                     len, channels);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y, channels, argmax] {
      const Tensor& dy = node(y).grad;
      double* dx = grad_buf(x).data.data();
      for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t src =
              static_cast<std::size_t>((*argmax)[r * channels + c]);
          dx[src * channels + c] += dy.at(r, c);
        }
    };
  }
  return y;
}

Tape::Id Tape::reshape(Id x, std::size_t rows, std::size_t cols) {
  const Tensor& xv = node(x).value;
  require(rows * cols == xv.numel(), "reshape(): element count changes");
  Tensor out = xv;
  out.rows = rows;
  out.cols = cols;
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      kernels::axpy(1.0, dy.data.data(), grad_buf(x).data.data(), dy.numel());
    };
  }
  return y;
}

Tape::Id Tape::slice_cols(Id x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = node(x).value;
  require(c0 < c1 && c1 <= xv.cols, "slice_cols(): bad column range");
  Tensor out(xv.rows, c1 - c0);
  for (std::size_t r = 0; r < xv.rows; ++r)
    for (std::size_t j = c0; j < c1; ++j) out.at(r, j - c0) = xv.at(r, j);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y, c0] {
      const Tensor& dy = node(y).grad;
      Tensor& dx = grad_buf(x);
      for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t j = 0; j < dy.cols; ++j)
          dx.at(r, c0 + j) += dy.at(r, j);
    };
  }
  return y;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& xs) {
  require(!xs.empty(), "concat_cols(): no inputs");
  const std::size_t rows = node(xs[0]).value.rows;
  std::size_t total = 0;
  bool ng = false;
  for (Id id : xs) {
    require(node(id).value.rows == rows, "concat_cols(): row mismatch");
    total += node(id).value.cols;
    ng = ng || node(id).needs_grad;
  }
  Tensor out(rows, total);
  std::size_t off = 0;
  for (Id id : xs) {
    const Tensor& xv = node(id).value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < xv.cols; ++j)
        out.at(r, off + j) = xv.at(r, j);
    off += xv.cols;
  }
  Id y = push(std::move(out), ng);
  if (ng) {
    std::vector<Id> inputs = xs;
    node(y).backprop = [this, inputs, y] {
      const Tensor& dy = node(y).grad;
      std::size_t off = 0;
      for (Id id : inputs) {
        const std::size_t w = node(id).value.cols;
        if (node(id).needs_grad) {
          Tensor& dx = grad_buf(id);
          for (std::size_t r = 0; r < dy.rows; ++r)
            for (std::size_t j = 0; j < w; ++j)
              dx.at(r, j) += dy.at(r, off + j);
        }
        off += w;
      }
    };
  }
  return y;
}

Tape::Id Tape::slice_time(Id x, std::size_t batch, std::size_t steps,
                          std::size_t t) {
  const Tensor& xv = node(x).value;
  require(t < steps && xv.rows == batch * steps,
          "slice_time(): input is not [batch*steps, d]");
  Tensor out(batch, xv.cols);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < xv.cols; ++j)
      out.at(b, j) = xv.at(b * steps + t, j);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y, batch, steps, t] {
      const Tensor& dy = node(y).grad;
      Tensor& dx = grad_buf(x);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < dy.cols; ++j)
          dx.at(b * steps + t, j) += dy.at(b, j);
    };
  }
  return y;
}

Tape::Id Tape::stack_time(const std::vector<Id>& steps_tensors) {
  require(!steps_tensors.empty(), "stack_time(): no inputs");
  const std::size_t steps = steps_tensors.size();
  const std::size_t batch = node(steps_tensors[0]).value.rows;
  const std::size_t d = node(steps_tensors[0]).value.cols;
  bool ng = false;
  for (Id id : steps_tensors) {
    require(node(id).value.rows == batch && node(id).value.cols == d,
            "stack_time(): step shape mismatch");
    ng = ng || node(id).needs_grad;
  }
  Tensor out(batch * steps, d);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor& hv = node(steps_tensors[t]).value;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < d; ++j)
        out.at(b * steps + t, j) = hv.at(b, j);
  }
  Id y = push(std::move(out), ng);
  if (ng) {
    std::vector<Id> inputs = steps_tensors;
    node(y).backprop = [this, inputs, y, batch] {
      const Tensor& dy = node(y).grad;
      const std::size_t steps = inputs.size();
      for (std::size_t t = 0; t < steps; ++t) {
        if (!node(inputs[t]).needs_grad) continue;
        Tensor& dx = grad_buf(inputs[t]);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < dy.cols; ++j)
            dx.at(b, j) += dy.at(b * steps + t, j);
      }
    };
  }
  return y;
}

Tape::Id Tape::dropout(Id x, std::vector<double> mask) {
  const Tensor& xv = node(x).value;
  require(mask.size() == xv.numel(), "dropout(): mask size mismatch");
  Tensor out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = xv.data[i] * mask[i];
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    auto m = std::make_shared<std::vector<double>>(std::move(mask));
    node(y).backprop = [this, x, y, m] {
      const Tensor& dy = node(y).grad;
      double* dx = grad_buf(x).data.data();
      for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] += dy.data[i] * (*m)[i];
    };
  }
  return y;
}

Tape::Id Tape::gather_rows(Id x, std::vector<std::size_t> idx) {
  const Tensor& xv = node(x).value;
  require(!idx.empty(), "gather_rows(): empty index list");
  for (std::size_t r : idx)
    require(r < xv.rows, "gather_rows(): row index out of range");
  Tensor out(idx.size(), xv.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < xv.cols; ++j)
      out.at(r, j) = xv.at(idx[r], j);
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    node(y).backprop = [this, x, y, ix] {
      const Tensor& dy = node(y).grad;
      Tensor& dx = grad_buf(x);
      for (std::size_t r = 0; r < ix->size(); ++r)
        for (std::size_t j = 0; j < dy.cols; ++j)
          dx.at((*ix)[r], j) += dy.at(r, j);
    };
  }
  return y;
}

Tape::Id Tape::cosine_rows(Id a, Id b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require(av.rows == bv.rows && av.cols == bv.cols,
          "cosine_rows(): shape mismatch");
  Tensor out(av.rows, 1);
  for (std::size_t r = 0; r < av.rows; ++r) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    const double* ar = av.data.data() + r * av.cols;
    const double* br = bv.data.data() + r * av.cols;
    for (std::size_t j = 0; j < av.cols; ++j) {
      dot += ar[j] * br[j];
      na2 += ar[j] * ar[j];
      nb2 += br[j] * br[j];
    }
    const double denom = std::sqrt(na2) * std::sqrt(nb2);
    out.data[r] = denom > 0.0 ? dot / denom : 0.0;
  }
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, a, b, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& av = node(a).value;
      const Tensor& bv = node(b).value;
      const Tensor& yv = node(y).value;
      const std::size_t cols = av.cols;
      for (std::size_t r = 0; r < av.rows; ++r) {
        const double g = dy.data[r];
        if (g == 0.0) continue;
        const double* ar = av.data.data() + r * cols;
        const double* br = bv.data.data() + r * cols;
        double na2 = 0.0, nb2 = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          na2 += ar[j] * ar[j];
          nb2 += br[j] * br[j];
        }
        const double na = std::sqrt(na2), nb = std::sqrt(nb2);
        if (na == 0.0 || nb == 0.0) continue;
        const double cosv = yv.data[r];
        const double inv = 1.0 / (na * nb);
        if (node(a).needs_grad) {
          double* da = grad_buf(a).data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j)
            da[j] += g * (br[j] * inv - cosv * ar[j] / na2);
        }
        if (node(b).needs_grad) {
          double* db = grad_buf(b).data.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j)
            db[j] += g * (ar[j] * inv - cosv * br[j] / nb2);
        }
      }
    };
  }
  return y;
}

Tape::Id Tape::square(Id x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = xv.data[i] * xv.data[i];
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const Tensor& dy = node(y).grad;
      const Tensor& xin = node(x).value;
      double* dx = grad_buf(x).data.data();
      for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] += 2.0 * xin.data[i] * dy.data[i];
    };
  }
  return y;
}

Tape::Id Tape::mean_all(Id x) {
  const Tensor& xv = node(x).value;
  double sum = 0.0;
  for (double v : xv.data) sum += v;
  Tensor out(1, 1);
  out.data[0] = sum / static_cast<double>(xv.numel());
  const bool ng = node(x).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    node(y).backprop = [this, x, y] {
      const double g =
          node(y).grad.data[0] / static_cast<double>(node(x).value.numel());
      Tensor& dx = grad_buf(x);
      for (std::size_t i = 0; i < dx.numel(); ++i) dx.data[i] += g;
    };
  }
  return y;
}

Tape::Id Tape::cross_entropy_rows(Id logits, std::vector<int> labels) {
  const Tensor& lv = node(logits).value;
  require(labels.size() == lv.rows,
          "cross_entropy_rows(): one label per row required");
  for (int c : labels)
    require(c >= 0 && static_cast<std::size_t>(c) < lv.cols,
            "cross_entropy_rows(): label out of range");
  Tensor out(lv.rows, 1);
  auto probs = std::make_shared<Tensor>(lv.rows, lv.cols);
  kernels::softmax_rows(lv.data.data(), probs->data.data(), lv.rows, lv.cols);
  for (std::size_t r = 0; r < lv.rows; ++r) {
    const double* row = lv.data.data() + r * lv.cols;
    double mx = row[0];
    for (std::size_t j = 1; j < lv.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < lv.cols; ++j) sum += std::exp(row[j] - mx);
    out.data[r] = mx + std::log(sum) - row[static_cast<std::size_t>(labels[r])];
  }
  const bool ng = node(logits).needs_grad;
  Id y = push(std::move(out), ng);
  if (ng) {
    auto lab = std::make_shared<std::vector<int>>(std::move(labels));
    node(y).backprop = [this, logits, y, probs, lab] {
      const Tensor& dy = node(y).grad;
      Tensor& dx = grad_buf(logits);
      for (std::size_t r = 0; r < dx.rows; ++r) {
        const double g = dy.data[r];
        if (g == 0.0) continue;
        for (std::size_t j = 0; j < dx.cols; ++j) {
          double p = probs->at(r, j);
          if (j == static_cast<std::size_t>((*lab)[r])) p -= 1.0;
          dx.at(r, j) += g * p;
        }
      }
    };
  }
  return y;
}

void Tape::backward(Id root) {
  require(!backward_done_, "backward(): tape already differentiated");
  const Node& rn = node(root);
  require(rn.value.rows == 1 && rn.value.cols == 1,
          "backward(): root must be a scalar");
  require(rn.needs_grad, "backward(): root does not depend on any parameter");
  backward_done_ = true;
  grad_buf(root).data[0] = 1.0;
  for (Id i = root; i >= 0; --i) {
    Node& nd = nodes_[static_cast<std::size_t>(i)];
    if (!nd.needs_grad || !nd.backprop) continue;
    if (nd.grad.numel() == 0) continue;  // no path from this node to the root
    nd.backprop();
  }
}

}  // namespace repq
