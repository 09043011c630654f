#include "mmreid/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "mmreid/kernels.hpp"

namespace mmreid {

namespace {

std::string shape_str(int r, int c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
    }
}

bool any_needs_grad(const std::vector<Value>& parents) {
    for (const auto& p : parents) {
        if (p.node()->needs_grad) return true;
    }
    return false;
}

// Accumulate g into parent's grad buffer if it participates in backward.
void accum(Node& parent, const double* g, int n) {
    if (!parent.needs_grad) return;
    parent.ensure_grad();
    kernels::vec_acc(parent.grad.data(), g, n);
}

}  // namespace

Value Value::param(int rows, int cols, std::vector<double> data, const char* tag) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    if (static_cast<int>(data.size()) != rows * cols) {
        throw std::invalid_argument("Value::param: data size does not match shape " + shape_str(rows, cols));
    }
    n->data = std::move(data);
    n->requires_grad = true;
    n->needs_grad = true;
    n->op_tag = tag;
    return Value(std::move(n));
}

Value Value::constant(int rows, int cols, std::vector<double> data, const char* tag) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    if (static_cast<int>(data.size()) != rows * cols) {
        throw std::invalid_argument("Value::constant: data size does not match shape " + shape_str(rows, cols));
    }
    n->data = std::move(data);
    n->op_tag = tag;
    return Value(std::move(n));
}

Value Value::zeros(int rows, int cols, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Value(std::move(n));
}

Value Value::full(int rows, int cols, double v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(static_cast<std::size_t>(rows) * cols, v);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Value(std::move(n));
}

Value Value::scalar(double v) { return constant(1, 1, {v}, "scalar"); }

Value Value::from_op(int rows, int cols, std::vector<double> data,
                     std::vector<Value> parents,
                     std::function<void(Node&)> backward_fn, const char* tag) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->data = std::move(data);
    n->needs_grad = any_needs_grad(parents);
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    if (n->needs_grad) n->backward_fn = std::move(backward_fn);
    n->op_tag = tag;
    return Value(std::move(n));
}

double Value::item() const {
    if (size() != 1) {
        throw std::logic_error(std::string("Value::item: not a scalar, shape ") + shape_str(rows(), cols()));
    }
    return n_->data[0];
}

std::vector<double>& Value::leaf_data() const {
    if (!n_->parents.empty()) {
        throw std::logic_error("Value::leaf_data: interior graph nodes are immutable");
    }
    return n_->data;
}

const std::vector<double>& Value::grad() const {
    if (!has_grad()) {
        throw std::logic_error("Value::grad: gradient not populated; run backward() first");
    }
    return n_->grad;
}

void Value::backward() const {
    if (size() != 1) {
        throw std::logic_error("backward: objective must be scalar, got " + shape_str(rows(), cols()));
    }
    if (!n_->needs_grad) return;  // no differentiable leaf reachable
    // Iterative post-order topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* next = node->parents[child].get();
            ++child;
            if (visited.insert(next).second) {
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* node : order) {
        if (node->needs_grad) node->ensure_grad();
    }
    n_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->needs_grad && node->backward_fn) node->backward_fn(*node);
    }
}

// ------------------------------------------------------------------- ops

Value matmul(const Value& a, const Value& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.rows(), a.cols()) +
                                    " * " + shape_str(b.rows(), b.cols()));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    kernels::matmul_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Value::from_op(m, n, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            kernels::matmul_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k, true);
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            kernels::matmul_tn(pa.data.data(), self.grad.data(), pb.grad.data(), k, m, n, true);
        }
    }, "matmul");
}

Value transpose(const Value& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(static_cast<std::size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = a.at(i, j);
    }
    return Value::from_op(c, r, std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < c; ++i) {
            for (int j = 0; j < r; ++j) {
                p.grad[static_cast<std::size_t>(j) * c + i] += self.grad[static_cast<std::size_t>(i) * r + j];
            }
        }
    }, "transpose");
}

Value affine(const Value& x, const Value& w, const Value& b) {
    if (x.cols() != w.cols()) {
        throw std::invalid_argument("affine: input dim " + shape_str(x.rows(), x.cols()) +
                                    " does not match weight " + shape_str(w.rows(), w.cols()));
    }
    const int n = x.rows(), in = x.cols(), out = w.rows();
    const bool biased = b.valid();
    if (biased && (b.rows() != 1 || b.cols() != out)) {
        throw std::invalid_argument("affine: bias must be 1x" + std::to_string(out));
    }
    std::vector<double> y(static_cast<std::size_t>(n) * out);
    kernels::matmul_nt(x.data().data(), w.data().data(), y.data(), n, in, out);
    if (biased) {
        for (int i = 0; i < n; ++i) {
            kernels::vec_acc(y.data() + static_cast<std::size_t>(i) * out, b.data().data(), out);
        }
    }
    std::vector<Value> parents{x, w};
    if (biased) parents.push_back(b);
    return Value::from_op(n, out, std::move(y), std::move(parents), [n, in, out, biased](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        if (px.needs_grad) {
            px.ensure_grad();
            kernels::matmul_nn(self.grad.data(), pw.data.data(), px.grad.data(), n, out, in, true);
        }
        if (pw.needs_grad) {
            pw.ensure_grad();
            kernels::matmul_tn(self.grad.data(), px.data.data(), pw.grad.data(), out, n, in, true);
        }
        if (biased) {
            Node& pb = *self.parents[2];
            if (pb.needs_grad) {
                pb.ensure_grad();
                for (int i = 0; i < n; ++i) {
                    kernels::vec_acc(pb.grad.data(), self.grad.data() + static_cast<std::size_t>(i) * out, out);
                }
            }
        }
    }, "affine");
}

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data().size());
    kernels::vec_add(a.data().data(), b.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
        accum(*self.parents[0], self.grad.data(), self.size());
        accum(*self.parents[1], self.grad.data(), self.size());
    }, "add");
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.data().size());
    kernels::vec_sub(a.data().data(), b.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
        accum(*self.parents[0], self.grad.data(), self.size());
        Node& pb = *self.parents[1];
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (int i = 0; i < self.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    }, "sub");
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.data().size());
    kernels::vec_mul(a.data().data(), b.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (int i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (int i = 0; i < self.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
        }
    }, "mul");
}

Value scale(const Value& a, double alpha) {
    std::vector<double> out(a.data().size());
    kernels::vec_scale(a.data().data(), alpha, out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [alpha](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::vec_acc_scaled(p.grad.data(), self.grad.data(), alpha, self.size());
    }, "scale");
}

Value add_scalar(const Value& a, double c) {
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [](Node& self) {
        accum(*self.parents[0], self.grad.data(), self.size());
    }, "add_scalar");
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value add_row_bias(const Value& a, const Value& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw std::invalid_argument("add_row_bias: bias must be 1x" + std::to_string(a.cols()) +
                                    ", got " + shape_str(bias.rows(), bias.cols()));
    }
    const int n = a.rows(), d = a.cols();
    std::vector<double> out(a.data().size());
    for (int i = 0; i < n; ++i) {
        kernels::vec_add(a.data().data() + static_cast<std::size_t>(i) * d, bias.data().data(),
                         out.data() + static_cast<std::size_t>(i) * d, d);
    }
    return Value::from_op(n, d, std::move(out), {a, bias}, [n, d](Node& self) {
        accum(*self.parents[0], self.grad.data(), self.size());
        Node& pb = *self.parents[1];
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (int i = 0; i < n; ++i) {
                kernels::vec_acc(pb.grad.data(), self.grad.data() + static_cast<std::size_t>(i) * d, d);
            }
        }
    }, "add_row_bias");
}

Value vexp(const Value& a) {
    std::vector<double> out(a.data().size());
    kernels::vec_exp(a.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i] * self.data[i];
    }, "exp");
}

Value vlog(const Value& a) {
    std::vector<double> out(a.data().size());
    kernels::vec_log(a.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i] / p.data[i];
    }, "log");
}

Value relu(const Value& a) {
    std::vector<double> out(a.data().size());
    kernels::relu_fwd(a.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::relu_bwd(p.data.data(), self.grad.data(), p.grad.data(), self.size());
    }, "relu");
}

Value gelu(const Value& a) {
    std::vector<double> out(a.data().size());
    kernels::gelu_fwd(a.data().data(), out.data(), a.size());
    return Value::from_op(a.rows(), a.cols(), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::gelu_bwd(p.data.data(), self.grad.data(), p.grad.data(), self.size());
    }, "gelu");
}

Value softmax_rows(const Value& a) {
    for (double v : a.data()) {
        if (std::isnan(v)) throw std::invalid_argument("softmax_rows: NaN in input");
    }
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(a.data().size());
    kernels::softmax_rows(a.data().data(), out.data(), r, c);
    return Value::from_op(r, c, std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::softmax_rows_bwd(self.data.data(), self.grad.data(), p.grad.data(), r, c);
    }, "softmax_rows");
}

Value log_softmax_rows(const Value& a) {
    for (double v : a.data()) {
        if (std::isnan(v)) throw std::invalid_argument("log_softmax_rows: NaN in input");
    }
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(a.data().size());
    kernels::log_softmax_rows(a.data().data(), out.data(), r, c);
    return Value::from_op(r, c, std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::log_softmax_rows_bwd(self.data.data(), self.grad.data(), p.grad.data(), r, c);
    }, "log_softmax_rows");
}

Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta, double eps) {
    const int r = x.rows(), c = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c) {
        throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1x" + std::to_string(c));
    }
    std::vector<double> out(x.data().size());
    auto xhat = std::make_shared<std::vector<double>>(x.data().size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r));
    kernels::layer_norm_rows(x.data().data(), gamma.data().data(), beta.data().data(),
                             out.data(), xhat->data(), inv_std->data(), r, c, eps);
    return Value::from_op(r, c, std::move(out), {x, gamma, beta}, [r, c, xhat, inv_std](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> scratch_g(static_cast<std::size_t>(c), 0.0);
        std::vector<double> scratch_b(static_cast<std::size_t>(c), 0.0);
        double* gx = nullptr;
        std::vector<double> discard;
        if (px.needs_grad) {
            px.ensure_grad();
            gx = px.grad.data();
        } else {
            discard.assign(static_cast<std::size_t>(r) * c, 0.0);
            gx = discard.data();
        }
        kernels::layer_norm_rows_bwd(xhat->data(), inv_std->data(), pg.data.data(), self.grad.data(),
                                     gx, scratch_g.data(), scratch_b.data(), r, c);
        if (pg.needs_grad) {
            pg.ensure_grad();
            kernels::vec_acc(pg.grad.data(), scratch_g.data(), c);
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            kernels::vec_acc(pb.grad.data(), scratch_b.data(), c);
        }
    }, "layer_norm_rows");
}

Value l2_normalize_rows(const Value& a, double eps) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(a.data().size());
    auto inv_norm = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r));
    std::vector<int> degenerate;
    kernels::l2_normalize_rows(a.data().data(), out.data(), inv_norm->data(), r, c, eps, &degenerate);
    Value v = Value::from_op(r, c, std::move(out), {a}, [r, c, inv_norm](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::l2_normalize_rows_bwd(self.data.data(), inv_norm->data(), self.grad.data(),
                                       p.grad.data(), r, c);
    }, "l2_normalize_rows");
    v.node()->degenerate_rows = std::move(degenerate);
    return v;
}

Value concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const int c = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) {
            throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.rows(), p.cols()) +
                                        " vs expected cols " + std::to_string(c));
        }
        total += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total) * c);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Value::from_op(total, c, std::move(out), parts, [c](Node& self) {
        std::size_t offset = 0;
        for (auto& parent : self.parents) {
            const std::size_t len = parent->data.size();
            if (parent->needs_grad) {
                parent->ensure_grad();
                kernels::vec_acc(parent->grad.data(), self.grad.data() + offset, static_cast<int>(len));
            }
            offset += len;
        }
    }, "concat_rows");
}

Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const int r = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) {
            throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.rows(), p.cols()) +
                                        " vs expected rows " + std::to_string(r));
        }
        total += p.cols();
    }
    std::vector<double> out(static_cast<std::size_t>(r) * total);
    int off = 0;
    for (const auto& p : parts) {
        const int c = p.cols();
        for (int i = 0; i < r; ++i) {
            std::copy(p.data().data() + static_cast<std::size_t>(i) * c,
                      p.data().data() + static_cast<std::size_t>(i + 1) * c,
                      out.data() + static_cast<std::size_t>(i) * total + off);
        }
        off += c;
    }
    return Value::from_op(r, total, std::move(out), parts, [r, total](Node& self) {
        int off2 = 0;
        for (auto& parent : self.parents) {
            const int c = parent->cols;
            if (parent->needs_grad) {
                parent->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    kernels::vec_acc(parent->grad.data() + static_cast<std::size_t>(i) * c,
                                     self.grad.data() + static_cast<std::size_t>(i) * total + off2, c);
                }
            }
            off2 += c;
        }
    }, "concat_cols");
}

Value repeat_rows(const Value& a, int times) {
    if (a.rows() != 1) throw std::invalid_argument("repeat_rows: expects a single row");
    if (times < 1) throw std::invalid_argument("repeat_rows: times must be >= 1");
    const int d = a.cols();
    std::vector<double> out(static_cast<std::size_t>(times) * d);
    for (int i = 0; i < times; ++i) {
        std::copy(a.data().begin(), a.data().end(), out.data() + static_cast<std::size_t>(i) * d);
    }
    return Value::from_op(times, d, std::move(out), {a}, [times, d](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < times; ++i) {
            kernels::vec_acc(p.grad.data(), self.grad.data() + static_cast<std::size_t>(i) * d, d);
        }
    }, "repeat_rows");
}

Value slice_rows(const Value& a, int row_begin, int row_end) {
    if (row_begin < 0 || row_end > a.rows() || row_begin >= row_end) {
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(row_begin) + "," +
                                    std::to_string(row_end) + ") for " + shape_str(a.rows(), a.cols()));
    }
    const int c = a.cols();
    const int r = row_end - row_begin;
    std::vector<double> out(a.data().begin() + static_cast<std::size_t>(row_begin) * c,
                            a.data().begin() + static_cast<std::size_t>(row_end) * c);
    return Value::from_op(r, c, std::move(out), {a}, [row_begin, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        kernels::vec_acc(p.grad.data() + static_cast<std::size_t>(row_begin) * c,
                         self.grad.data(), self.size());
    }, "slice_rows");
}

Value slice_cols(const Value& a, int col_begin, int col_end) {
    if (col_begin < 0 || col_end > a.cols() || col_begin >= col_end) {
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(col_begin) + "," +
                                    std::to_string(col_end) + ") for " + shape_str(a.rows(), a.cols()));
    }
    const int r = a.rows(), c = a.cols();
    const int w = col_end - col_begin;
    std::vector<double> out(static_cast<std::size_t>(r) * w);
    for (int i = 0; i < r; ++i) {
        const double* src = a.data().data() + static_cast<std::size_t>(i) * c + col_begin;
        std::copy(src, src + w, out.data() + static_cast<std::size_t>(i) * w);
    }
    return Value::from_op(r, w, std::move(out), {a}, [col_begin, r, c, w](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            kernels::vec_acc(p.grad.data() + static_cast<std::size_t>(i) * c + col_begin,
                             self.grad.data() + static_cast<std::size_t>(i) * w, w);
        }
    }, "slice_cols");
}

Value select_rows(const Value& a, const std::vector<int>& indices) {
    const int c = a.cols();
    const int r = static_cast<int>(indices.size());
    std::vector<double> out(static_cast<std::size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
        const int src = indices[static_cast<std::size_t>(i)];
        if (src < 0 || src >= a.rows()) {
            throw std::out_of_range("select_rows: index " + std::to_string(src) + " out of " +
                                    std::to_string(a.rows()));
        }
        std::copy(a.data().data() + static_cast<std::size_t>(src) * c,
                  a.data().data() + static_cast<std::size_t>(src + 1) * c,
                  out.data() + static_cast<std::size_t>(i) * c);
    }
    auto idx = std::make_shared<std::vector<int>>(indices);
    return Value::from_op(r, c, std::move(out), {a}, [idx, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            kernels::vec_acc(p.grad.data() + static_cast<std::size_t>((*idx)[i]) * c,
                             self.grad.data() + i * c, c);
        }
    }, "select_rows");
}

Value select_entries(const Value& a, const std::vector<std::pair<int, int>>& entries) {
    const int k = static_cast<int>(entries.size());
    std::vector<double> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const auto [r, c] = entries[static_cast<std::size_t>(i)];
        if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
            throw std::out_of_range("select_entries: (" + std::to_string(r) + "," + std::to_string(c) +
                                    ") out of " + shape_str(a.rows(), a.cols()));
        }
        out[static_cast<std::size_t>(i)] = a.at(r, c);
    }
    auto idx = std::make_shared<std::vector<std::pair<int, int>>>(entries);
    const int cols = a.cols();
    return Value::from_op(k, 1, std::move(out), {a}, [idx, cols](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const auto [r, c] = (*idx)[i];
            p.grad[static_cast<std::size_t>(r) * cols + c] += self.grad[i];
        }
    }, "select_entries");
}

Value row_sum(const Value& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += a.at(i, j);
        out[static_cast<std::size_t>(i)] = s;
    }
    return Value::from_op(r, 1, std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const double g = self.grad[static_cast<std::size_t>(i)];
            double* row = p.grad.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) row[j] += g;
        }
    }, "row_sum");
}

Value col_mean(const Value& a) {
    const int r = a.rows(), c = a.cols();
    // Extended-precision accumulation keeps the mean of duplicated rows
    // exact: k identical values sum without rounding for any realistic k.
    std::vector<long double> acc(static_cast<std::size_t>(c), 0.0L);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) acc[static_cast<std::size_t>(j)] += a.at(i, j);
    }
    std::vector<double> out(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(acc[static_cast<std::size_t>(j)] / r);
    return Value::from_op(1, c, std::move(out), {a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const double inv = 1.0 / r;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                p.grad[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j)] * inv;
            }
        }
    }, "col_mean");
}

Value sum_all(const Value& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Value::from_op(1, 1, {s}, {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const double g = self.grad[0];
        for (auto& v : p.grad) v += g;
    }, "sum_all");
}

Value mean_all(const Value& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const int n = a.size();
    return Value::from_op(1, 1, {s / n}, {a}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const double g = self.grad[0] / n;
        for (auto& v : p.grad) v += g;
    }, "mean_all");
}

Value dot_rows(const Value& a, const Value& b) {
    check_same_shape(a, b, "dot_rows");
    const int r = a.rows(), c = a.cols();
    std::vector<double> out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += a.at(i, j) * b.at(i, j);
        out[static_cast<std::size_t>(i)] = s;
    }
    return Value::from_op(r, 1, std::move(out), {a, b}, [r, c](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int i = 0; i < r; ++i) {
            const double g = self.grad[static_cast<std::size_t>(i)];
            if (pa.needs_grad) {
                pa.ensure_grad();
                kernels::vec_acc_scaled(pa.grad.data() + static_cast<std::size_t>(i) * c,
                                        pb.data.data() + static_cast<std::size_t>(i) * c, g, c);
            }
            if (pb.needs_grad) {
                pb.ensure_grad();
                kernels::vec_acc_scaled(pb.grad.data() + static_cast<std::size_t>(i) * c,
                                        pa.data.data() + static_cast<std::size_t>(i) * c, g, c);
            }
        }
    }, "dot_rows");
}

}  // namespace mmreid
