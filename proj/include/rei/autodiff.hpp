#pragma once

// Reverse-mode automatic differentiation over dense 2-D double matrices.
//
// Parameters live in `Tensor` objects owned by the caller. A `Tape` records
// the operations of one forward pass; `Var` is a handle to a recorded value.
// Broadcasting is limited to a 1-row operand against an N-row operand.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rei::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
    bool requires_grad = true;

    Tensor() = default;
    Tensor(std::string name, Matrix value, bool requires_grad = true);

    std::vector<std::size_t> shape() const { return {static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())}; }
    std::size_t size() const { return static_cast<std::size_t>(value.size()); }
    void zero_grad();
};

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool needs_grad() const;
    double item() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backprop = std::function<void(const Matrix& upstream)>;

    // Records a parameter; gradients flow back into `t.grad` on backward().
    Var param(Tensor& t);
    Var constant(Matrix value);

    Var record(Matrix value, std::vector<Var> inputs, Backprop backprop);

    // Accumulates d(loss)/d(param) into every recorded parameter's grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    void accumulate(std::size_t id, const Matrix& g);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Tensor* param = nullptr;
        Backprop backprop;
    };
    std::deque<Node> nodes_;
};

// Elementwise with 1-row broadcast of either operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var tanh(Var a);
// Gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);

// Reductions. sum/mean give 1x1; sum_cols gives rows x 1.
Var sum(Var a);
Var mean(Var a);
Var sum_cols(Var a);
Var logsumexp_cols(Var a);

// Shape manipulation.
Var broadcast_rows(Var a, Eigen::Index rows);  // 1 x d -> rows x d
Var repeat_rows(Var a, Eigen::Index times);    // each row repeated `times` times consecutively
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);  // row-major reinterpretation

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t step = 0;
};

AdamState adam_init(const std::vector<Tensor*>& params);
void adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg);

// Checkpoint: 8-byte magic, u64 header length, JSON header, then the
// parameter values as little-endian f64 in header order.
struct Checkpoint {
    std::vector<Tensor> tensors;
    std::uint64_t seed = 0;
    std::string extra_json = "{}";  // free-form metadata object
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors,
                     std::uint64_t seed, const std::string& extra_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rei::ad
