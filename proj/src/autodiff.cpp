#include "rei/autodiff.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei::ad {

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

Tape* tape_of(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (!v.tape()) throw ShapeMismatch("operation on an unrecorded Var");
        if (t && t != v.tape()) throw ShapeMismatch("operands recorded on different tapes");
        t = v.tape();
    }
    return t;
}

// Output rows for a binary elementwise op with 1-row broadcast.
Eigen::Index broadcast_rows_of(const Matrix& a, const Matrix& b, const char* op) {
    if (a.cols() != b.cols() || (a.rows() != b.rows() && a.rows() != 1 && b.rows() != 1)) {
        throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    return std::max(a.rows(), b.rows());
}

Matrix expand(const Matrix& m, Eigen::Index rows) {
    if (m.rows() == rows) return m;
    return m.replicate(rows, 1);
}

// Sums a gradient back down to an operand that was broadcast from one row.
Matrix reduce_to(const Matrix& g, Eigen::Index rows) {
    if (g.rows() == rows) return g;
    return g.colwise().sum();
}

Var unary(Var a, Matrix value, std::function<Matrix(const Matrix& upstream)> local) {
    Tape* t = tape_of({a});
    const std::size_t ia = a.id();
    return t->record(std::move(value), {a}, [t, ia, local](const Matrix& g) { t->accumulate(ia, local(g)); });
}

constexpr char kMagic[8] = {'R', 'E', 'I', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

Tensor::Tensor(std::string n, Matrix v, bool rg) : name(std::move(n)), value(std::move(v)), requires_grad(rg) {
    grad = Matrix::Zero(value.rows(), value.cols());
}

void Tensor::zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::needs_grad() const { return tape_->needs_grad(id_); }

double Var::item() const {
    if (value().size() != 1) throw ShapeMismatch("item() on non-scalar of shape " + shape_str(value()));
    return value()(0, 0);
}

Var Tape::param(Tensor& t) {
    Node n;
    n.value = t.value;
    n.needs_grad = t.requires_grad;
    if (n.needs_grad) {
        n.grad = Matrix::Zero(t.value.rows(), t.value.cols());
        n.param = &t;
        if (t.grad.rows() != t.value.rows() || t.grad.cols() != t.value.cols()) t.zero_grad();
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> inputs, Backprop backprop) {
    Node n;
    n.value = std::move(value);
    for (const Var& v : inputs) n.needs_grad = n.needs_grad || v.needs_grad();
    if (n.needs_grad) {
        n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        n.backprop = std::move(backprop);
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    n.grad += g;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ShapeMismatch("loss belongs to another tape");
    if (loss.value().size() != 1) throw NonScalarLoss("backward() needs a scalar loss, got " + shape_str(loss.value()));
    if (nodes_.empty()) throw NonScalarLoss("empty tape");
    for (auto& n : nodes_) {
        if (n.needs_grad) n.grad.setZero();
    }
    Node& root = nodes_[loss.id()];
    if (!root.needs_grad) return;
    root.grad(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad) continue;
        if (n.backprop) n.backprop(n.grad);
        if (n.param) n.param->grad += n.grad;
    }
}

Var add(Var a, Var b) {
    Tape* t = tape_of({a, b});
    const Eigen::Index r = broadcast_rows_of(a.value(), b.value(), "add");
    Matrix v = expand(a.value(), r) + expand(b.value(), r);
    const std::size_t ia = a.id(), ib = b.id();
    const Eigen::Index ra = a.rows(), rb = b.rows();
    return t->record(std::move(v), {a, b}, [t, ia, ib, ra, rb](const Matrix& g) {
        t->accumulate(ia, reduce_to(g, ra));
        t->accumulate(ib, reduce_to(g, rb));
    });
}

Var sub(Var a, Var b) {
    Tape* t = tape_of({a, b});
    const Eigen::Index r = broadcast_rows_of(a.value(), b.value(), "sub");
    Matrix v = expand(a.value(), r) - expand(b.value(), r);
    const std::size_t ia = a.id(), ib = b.id();
    const Eigen::Index ra = a.rows(), rb = b.rows();
    return t->record(std::move(v), {a, b}, [t, ia, ib, ra, rb](const Matrix& g) {
        t->accumulate(ia, reduce_to(g, ra));
        t->accumulate(ib, reduce_to(-g, rb));
    });
}

Var mul(Var a, Var b) {
    Tape* t = tape_of({a, b});
    const Eigen::Index r = broadcast_rows_of(a.value(), b.value(), "mul");
    Matrix ea = expand(a.value(), r), eb = expand(b.value(), r);
    Matrix v = ea.cwiseProduct(eb);
    const std::size_t ia = a.id(), ib = b.id();
    const Eigen::Index ra = a.rows(), rb = b.rows();
    return t->record(std::move(v), {a, b}, [t, ia, ib, ra, rb, ea, eb](const Matrix& g) {
        if (t->needs_grad(ia)) t->accumulate(ia, reduce_to(g.cwiseProduct(eb), ra));
        if (t->needs_grad(ib)) t->accumulate(ib, reduce_to(g.cwiseProduct(ea), rb));
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
    return unary(a, a.value() * s, [s](const Matrix& g) { return Matrix(g * s); });
}

Var add_scalar(Var a, double s) {
    return unary(a, (a.value().array() + s).matrix(), [](const Matrix& g) { return g; });
}

Var matmul(Var a, Var b) {
    Tape* t = tape_of({a, b});
    if (a.cols() != b.rows()) {
        throw ShapeMismatch("matmul: incompatible shapes " + shape_str(a.value()) + " and " + shape_str(b.value()));
    }
    Matrix v = a.value() * b.value();
    const std::size_t ia = a.id(), ib = b.id();
    return t->record(std::move(v), {a, b}, [t, ia, ib](const Matrix& g) {
        if (t->needs_grad(ia)) t->accumulate(ia, g * t->value(ib).transpose());
        if (t->needs_grad(ib)) t->accumulate(ib, t->value(ia).transpose() * g);
    });
}

Var relu(Var a) {
    Matrix mask = (a.value().array() > 0.0).cast<double>().matrix();
    return unary(a, a.value().cwiseMax(0.0), [mask](const Matrix& g) { return Matrix(g.cwiseProduct(mask)); });
}

Var exp(Var a) {
    Matrix v = a.value().array().exp().matrix();
    return unary(a, v, [v](const Matrix& g) { return Matrix(g.cwiseProduct(v)); });
}

Var log(Var a) {
    Matrix x = a.value();
    return unary(a, x.array().log().matrix(), [x](const Matrix& g) { return Matrix(g.cwiseQuotient(x)); });
}

Var square(Var a) {
    Matrix x = a.value();
    return unary(a, x.cwiseAbs2(), [x](const Matrix& g) { return Matrix(2.0 * g.cwiseProduct(x)); });
}

Var softplus(Var a) {
    const Matrix& x = a.value();
    // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    Matrix v = x.unaryExpr([](double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); });
    Matrix sig = x.unaryExpr([](double u) {
        return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    });
    return unary(a, std::move(v), [sig](const Matrix& g) { return Matrix(g.cwiseProduct(sig)); });
}

Var tanh(Var a) {
    Matrix v = a.value().array().tanh().matrix();
    return unary(a, v, [v](const Matrix& g) { return Matrix(g.array() * (1.0 - v.array().square())); });
}

Var clamp(Var a, double lo, double hi) {
    const Matrix& x = a.value();
    Matrix mask = ((x.array() > lo) && (x.array() < hi)).cast<double>().matrix();
    return unary(a, x.cwiseMax(lo).cwiseMin(hi), [mask](const Matrix& g) { return Matrix(g.cwiseProduct(mask)); });
}

Var sum(Var a) {
    const Eigen::Index r = a.rows(), c = a.cols();
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return unary(a, std::move(v), [r, c](const Matrix& g) { return Matrix(Matrix::Constant(r, c, g(0, 0))); });
}

Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeMismatch("mean of empty matrix");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_cols(Var a) {
    const Eigen::Index c = a.cols();
    Matrix v = a.value().rowwise().sum();
    return unary(a, std::move(v), [c](const Matrix& g) { return Matrix(g.replicate(1, c)); });
}

Var logsumexp_cols(Var a) {
    const Matrix& x = a.value();
    if (x.cols() == 0) throw ShapeMismatch("logsumexp over zero columns");
    Eigen::VectorXd mx = x.rowwise().maxCoeff();
    Matrix shifted = x.colwise() - mx;
    Matrix e = shifted.array().exp().matrix();
    Eigen::VectorXd s = e.rowwise().sum();
    Matrix v(x.rows(), 1);
    v.col(0) = mx.array() + s.array().log();
    Matrix soft = e.array().colwise() / s.array();
    return unary(a, std::move(v), [soft](const Matrix& g) {
        return Matrix(soft.array().colwise() * g.col(0).array());
    });
}

Var broadcast_rows(Var a, Eigen::Index rows) {
    if (a.rows() != 1) throw ShapeMismatch("broadcast_rows needs a 1-row operand, got " + shape_str(a.value()));
    return unary(a, a.value().replicate(rows, 1), [](const Matrix& g) { return Matrix(g.colwise().sum()); });
}

Var repeat_rows(Var a, Eigen::Index times) {
    const Matrix& x = a.value();
    Matrix v(x.rows() * times, x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) v.middleRows(i * times, times) = x.row(i).replicate(times, 1);
    const Eigen::Index r = x.rows(), c = x.cols();
    return unary(a, std::move(v), [r, c, times](const Matrix& g) {
        Matrix out(r, c);
        for (Eigen::Index i = 0; i < r; ++i) out.row(i) = g.middleRows(i * times, times).colwise().sum();
        return out;
    });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > a.cols()) {
        throw ShapeMismatch("slice_cols out of range for " + shape_str(a.value()));
    }
    const Eigen::Index r = a.rows(), c = a.cols();
    return unary(a, a.value().middleCols(begin, count), [r, c, begin, count](const Matrix& g) {
        Matrix out = Matrix::Zero(r, c);
        out.middleCols(begin, count) = g;
        return out;
    });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > a.rows()) {
        throw ShapeMismatch("slice_rows out of range for " + shape_str(a.value()));
    }
    const Eigen::Index r = a.rows(), c = a.cols();
    return unary(a, a.value().middleRows(begin, count), [r, c, begin, count](const Matrix& g) {
        Matrix out = Matrix::Zero(r, c);
        out.middleRows(begin, count) = g;
        return out;
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat of nothing");
    Tape* t = parts.front().tape();
    const Eigen::Index r = parts.front().rows();
    Eigen::Index total = 0;
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> widths;
    for (const Var& p : parts) {
        tape_of({parts.front(), p});
        if (p.rows() != r) throw ShapeMismatch("concat_cols: row counts differ");
        ids.push_back(p.id());
        widths.push_back(p.cols());
        total += p.cols();
    }
    Matrix v(r, total);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return t->record(std::move(v), parts, [t, ids, widths](const Matrix& g) {
        Eigen::Index off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t->needs_grad(ids[k])) t->accumulate(ids[k], g.middleCols(off, widths[k]));
            off += widths[k];
        }
    });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.value().size()) {
        throw ShapeMismatch("reshape " + shape_str(a.value()) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    const Eigen::Index r = a.rows(), c = a.cols();
    Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    return unary(a, std::move(v), [r, c](const Matrix& g) { return Matrix(Eigen::Map<const Matrix>(g.data(), r, c)); });
}

AdamState adam_init(const std::vector<Tensor*>& params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        s.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeMismatch("Adam state holds " + std::to_string(state.m.size()) + " slots for " +
                            std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = *params[i];
        if (state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols() ||
            p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            throw ShapeMismatch("Adam state/grad shape mismatch for '" + p.name + "'");
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (!p.requires_grad) continue;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * p.grad;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
        const auto m_hat = state.m[i].array() / bc1;
        const auto v_hat = state.v[i].array() / bc2;
        p.value.array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors,
                     std::uint64_t seed, const std::string& extra_json) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    nlohmann::json header;
    header["format"] = "rei-checkpoint";
    header["version"] = 1;
    header["seed"] = seed;
    header["extra"] = nlohmann::json::parse(extra_json);
    nlohmann::json list = nlohmann::json::array();
    for (const Tensor* t : tensors) {
        list.push_back({{"name", t->name}, {"shape", {t->value.rows(), t->value.cols()}}});
    }
    header["tensors"] = list;
    const std::string h = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    write_u64(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Tensor* t : tensors) {
        os.write(reinterpret_cast<const char*>(t->value.data()), static_cast<std::streamsize>(t->value.size() * sizeof(double)));
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint: " + path.string());
    const std::uint64_t len = read_u64(is);
    if (len > (1u << 30)) throw FormatError("implausible checkpoint header length");
    std::string h(len, '\0');
    if (!is.read(h.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    Checkpoint ck;
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.extra_json = header.value("extra", nlohmann::json::object()).dump();
    for (const auto& entry : header.at("tensors")) {
        const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
        const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
        Matrix m(rows, cols);
        if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
            throw FormatError("truncated checkpoint data");
        }
        ck.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
    return ck;
}

}  // namespace rei::ad
