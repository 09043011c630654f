#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace mmreid {

// One node of the reverse-mode differentiation graph: a dense row-major
// matrix (scalars are 1x1, row vectors 1xd) plus the closure that pushes its
// gradient into its parents. Data is immutable once the node is created;
// gradients are accumulated additively and zeroed explicitly.
struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;   // sized lazily during backward
    bool requires_grad = false; // leaf-level intent
    bool needs_grad = false;    // requires_grad or any parent needs it
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    const char* op_tag = "leaf";
    std::vector<int> degenerate_rows;

    int size() const { return rows * cols; }
    void ensure_grad() {
        if (grad.size() != static_cast<std::size_t>(size())) {
            grad.assign(static_cast<std::size_t>(size()), 0.0);
        }
    }
};

class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Value param(int rows, int cols, std::vector<double> data, const char* tag = "param");
    static Value constant(int rows, int cols, std::vector<double> data, const char* tag = "const");
    static Value zeros(int rows, int cols, bool requires_grad = false);
    static Value full(int rows, int cols, double v, bool requires_grad = false);
    static Value scalar(double v);

    // Generic node factory; also the hook the tests use to build ops with
    // deliberately corrupted backward rules.
    static Value from_op(int rows, int cols, std::vector<double> data,
                         std::vector<Value> parents,
                         std::function<void(Node&)> backward_fn, const char* tag);

    bool valid() const { return static_cast<bool>(n_); }
    int rows() const { return n_->rows; }
    int cols() const { return n_->cols; }
    int size() const { return n_->size(); }
    double item() const;
    double at(int r, int c) const { return n_->data[static_cast<std::size_t>(r) * n_->cols + c]; }

    const std::vector<double>& data() const { return n_->data; }
    // Leaf-only escape hatch for the optimizer, EMA updates and the
    // finite-difference driver. Graph interior stays immutable.
    std::vector<double>& leaf_data() const;

    bool requires_grad() const { return n_->requires_grad; }
    bool has_grad() const { return n_->grad.size() == static_cast<std::size_t>(n_->size()); }
    const std::vector<double>& grad() const;
    void zero_grad() const { n_->ensure_grad(); std::fill(n_->grad.begin(), n_->grad.end(), 0.0); }

    const char* op_tag() const { return n_->op_tag; }
    const std::vector<int>& degenerate_rows() const { return n_->degenerate_rows; }

    // Reverse pass from a scalar node. Populates grad buffers of every
    // reachable node that needs one, accumulating additively.
    void backward() const;

    std::shared_ptr<Node> node() const { return n_; }

private:
    std::shared_ptr<Node> n_;
};

// ------------------------------------------------------------------- ops

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
// y = x * W^T + b (b optional 1 x out row bias); the workhorse behind every
// projection and feed-forward layer.
Value affine(const Value& x, const Value& w, const Value& b = Value());

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double alpha);
Value add_scalar(const Value& a, double c);
Value neg(const Value& a);
Value add_row_bias(const Value& a, const Value& bias);

Value vexp(const Value& a);
Value vlog(const Value& a);
Value relu(const Value& a);
Value gelu(const Value& a);

Value softmax_rows(const Value& a);
Value log_softmax_rows(const Value& a);
Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta, double eps = 1e-5);
Value l2_normalize_rows(const Value& a, double eps = 1e-12);

Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value repeat_rows(const Value& a, int times);  // 1 x d -> times x d
Value slice_rows(const Value& a, int row_begin, int row_end);
Value slice_cols(const Value& a, int col_begin, int col_end);
Value select_rows(const Value& a, const std::vector<int>& indices);
Value select_entries(const Value& a, const std::vector<std::pair<int, int>>& entries);  // k x 1

Value row_sum(const Value& a);   // n x d -> n x 1
Value col_mean(const Value& a);  // n x d -> 1 x d
Value sum_all(const Value& a);   // 1 x 1
Value mean_all(const Value& a);  // 1 x 1
Value dot_rows(const Value& a, const Value& b);  // n x 1 of row-wise dots

}  // namespace mmreid
