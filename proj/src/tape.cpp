#include "gvida/tape.hpp"

#include <cmath>

#include "gvida/errors.hpp"

namespace gvida::ad {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw ParameterError(msg);
}

}  // namespace

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid tape handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::constant(Mat value) {
    Node n;
    n.op = Op::leaf;
    n.val = std::move(value);
    n.needs_grad = false;
    return push(std::move(n));
}

Var Tape::leaf(Mat value) {
    Node n;
    n.op = Op::leaf;
    n.val = std::move(value);
    n.needs_grad = true;
    return push(std::move(n));
}

Var Tape::unary(Op op, Var a, double s0, double s1) {
    const Node& na = at(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.s0 = s0;
    n.s1 = s1;
    n.needs_grad = na.needs_grad;
    switch (op) {
        case Op::scale: n.val = na.val * s0; break;
        case Op::add_scalar: n.val = na.val.array() + s0; break;
        case Op::relu: n.val = na.val.cwiseMax(0.0); break;
        case Op::sigmoid: n.val = (1.0 / (1.0 + (-na.val.array()).exp())).matrix(); break;
        case Op::log: n.val = na.val.array().log().matrix(); break;
        case Op::square: n.val = na.val.array().square().matrix(); break;
        case Op::clamp_min: n.val = na.val.cwiseMax(s0); break;
        case Op::clamp: n.val = na.val.cwiseMax(s0).cwiseMin(s1); break;
        case Op::sum: n.val = Mat::Constant(1, 1, na.val.sum()); break;
        case Op::mean_all: n.val = Mat::Constant(1, 1, na.val.mean()); break;
        case Op::col_mean: n.val = na.val.colwise().mean(); break;
        case Op::row_sum: n.val = na.val.rowwise().sum(); break;
        case Op::grl: n.val = na.val; break;
        case Op::softmax_rows: {
            Mat shifted = na.val.colwise() - na.val.rowwise().maxCoeff();
            Mat e = shifted.array().exp().matrix();
            n.val = e.array().colwise() / e.rowwise().sum().array();
            break;
        }
        default: throw ParameterError("unary dispatch on non-unary op");
    }
    return push(std::move(n));
}

Var Tape::binary(Op op, Var a, Var b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    switch (op) {
        case Op::add:
            require(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "add: shape mismatch");
            n.val = na.val + nb.val;
            break;
        case Op::sub:
            require(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "sub: shape mismatch");
            n.val = na.val - nb.val;
            break;
        case Op::mul:
            require(na.val.rows() == nb.val.rows() && na.val.cols() == nb.val.cols(), "mul: shape mismatch");
            n.val = na.val.cwiseProduct(nb.val);
            break;
        case Op::matmul:
            require(na.val.cols() == nb.val.rows(), "matmul: inner dims differ");
            n.val = na.val * nb.val;
            break;
        case Op::add_row:
            require(nb.val.rows() == 1 && nb.val.cols() == na.val.cols(), "add_row: need 1 x d row");
            n.val = na.val.rowwise() + nb.val.row(0);
            break;
        case Op::concat_rows:
            require(na.val.cols() == nb.val.cols(), "concat_rows: column mismatch");
            n.val.resize(na.val.rows() + nb.val.rows(), na.val.cols());
            n.val.topRows(na.val.rows()) = na.val;
            n.val.bottomRows(nb.val.rows()) = nb.val;
            break;
        case Op::outer_flatten: {
            require(na.val.rows() == nb.val.rows(), "outer_flatten: row mismatch");
            const auto r = na.val.rows();
            const auto df = na.val.cols(), dp = nb.val.cols();
            n.val.resize(r, df * dp);
            for (Eigen::Index i = 0; i < r; ++i)
                for (Eigen::Index j = 0; j < df; ++j)
                    for (Eigen::Index k = 0; k < dp; ++k)
                        n.val(i, j * dp + k) = na.val(i, j) * nb.val(i, k);
            break;
        }
        case Op::sqdist: {
            require(na.val.cols() == nb.val.cols(), "sqdist: dim mismatch");
            Eigen::VectorXd zn = na.val.rowwise().squaredNorm();
            Eigen::VectorXd en = nb.val.rowwise().squaredNorm();
            n.val = (-2.0 * na.val * nb.val.transpose()).colwise() + zn;
            n.val.rowwise() += en.transpose();
            break;
        }
        default: throw ParameterError("binary dispatch on non-binary op");
    }
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var Tape::scale(Var a, double s) { return unary(Op::scale, a, s); }
Var Tape::add_scalar(Var a, double s) { return unary(Op::add_scalar, a, s); }
Var Tape::matmul(Var a, Var b) { return binary(Op::matmul, a, b); }
Var Tape::add_row(Var a, Var row) { return binary(Op::add_row, a, row); }
Var Tape::relu(Var a) { return unary(Op::relu, a); }
Var Tape::sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var Tape::softmax_rows(Var a) { return unary(Op::softmax_rows, a); }
Var Tape::log(Var a) { return unary(Op::log, a); }
Var Tape::square(Var a) { return unary(Op::square, a); }
Var Tape::clamp_min(Var a, double lo) { return unary(Op::clamp_min, a, lo); }
Var Tape::clamp(Var a, double lo, double hi) { return unary(Op::clamp, a, lo, hi); }
Var Tape::sum(Var a) { return unary(Op::sum, a); }
Var Tape::mean_all(Var a) { return unary(Op::mean_all, a); }
Var Tape::col_mean(Var a) { return unary(Op::col_mean, a); }
Var Tape::row_sum(Var a) { return unary(Op::row_sum, a); }
Var Tape::concat_rows(Var a, Var b) { return binary(Op::concat_rows, a, b); }
Var Tape::outer_flatten(Var f, Var p) { return binary(Op::outer_flatten, f, p); }
Var Tape::grl(Var a, double lambda) { return unary(Op::grl, a, lambda); }
Var Tape::sqdist(Var z, Var e) { return binary(Op::sqdist, z, e); }

Var Tape::gather_rows(Var a, std::vector<int> rows) {
    const Node& na = at(a);
    for (int r : rows) require(r >= 0 && r < na.val.rows(), "gather_rows: index out of range");
    Node n;
    n.op = Op::gather_rows;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    n.val.resize(static_cast<Eigen::Index>(rows.size()), na.val.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        n.val.row(static_cast<Eigen::Index>(i)) = na.val.row(rows[i]);
    n.idx = std::move(rows);
    return push(std::move(n));
}

Var Tape::gather_cells(Var a, std::vector<int> cols) {
    const Node& na = at(a);
    require(static_cast<Eigen::Index>(cols.size()) == na.val.rows(), "gather_cells: one column per row");
    for (int c : cols) require(c >= 0 && c < na.val.cols(), "gather_cells: index out of range");
    Node n;
    n.op = Op::gather_cells;
    n.a = a.id;
    n.needs_grad = na.needs_grad;
    n.val.resize(na.val.rows(), 1);
    for (Eigen::Index i = 0; i < na.val.rows(); ++i) n.val(i, 0) = na.val(i, cols[static_cast<size_t>(i)]);
    n.idx = std::move(cols);
    return push(std::move(n));
}

const Mat& Tape::val(Var v) const { return at(v).val; }

const Mat& Tape::grad(Var v) const {
    const Node& n = at(v);
    require(n.grad.size() > 0, "gradient not computed for this node");
    return n.grad;
}

double Tape::scalar(Var v) const {
    const Node& n = at(v);
    require(n.val.size() == 1, "scalar() on a non-1x1 node");
    return n.val(0, 0);
}

void Tape::backward(Var root) {
    Node& r = nodes_.at(static_cast<size_t>(root.id));
    require(r.val.size() == 1, "backward root must be 1x1");
    for (auto& n : nodes_)
        if (n.needs_grad) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    if (!r.needs_grad) return;
    r.grad(0, 0) = 1.0;

    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.needs_grad || n.op == Op::leaf || n.grad.size() == 0) continue;
        const Mat& g = n.grad;
        Node* pa = n.a >= 0 ? &nodes_[static_cast<size_t>(n.a)] : nullptr;
        Node* pb = n.b >= 0 ? &nodes_[static_cast<size_t>(n.b)] : nullptr;
        auto flows_a = [&] { return pa && pa->needs_grad; };
        auto flows_b = [&] { return pb && pb->needs_grad; };
        switch (n.op) {
            case Op::add:
                if (flows_a()) pa->grad += g;
                if (flows_b()) pb->grad += g;
                break;
            case Op::sub:
                if (flows_a()) pa->grad += g;
                if (flows_b()) pb->grad -= g;
                break;
            case Op::mul:
                if (flows_a()) pa->grad += g.cwiseProduct(pb->val);
                if (flows_b()) pb->grad += g.cwiseProduct(pa->val);
                break;
            case Op::scale:
                if (flows_a()) pa->grad += n.s0 * g;
                break;
            case Op::add_scalar:
                if (flows_a()) pa->grad += g;
                break;
            case Op::matmul:
                if (flows_a()) pa->grad += g * pb->val.transpose();
                if (flows_b()) pb->grad += pa->val.transpose() * g;
                break;
            case Op::add_row:
                if (flows_a()) pa->grad += g;
                if (flows_b()) pb->grad += g.colwise().sum();
                break;
            case Op::relu:
                if (flows_a()) pa->grad += g.cwiseProduct((pa->val.array() > 0.0).cast<double>().matrix());
                break;
            case Op::sigmoid:
                if (flows_a()) pa->grad += g.cwiseProduct(n.val.cwiseProduct((1.0 - n.val.array()).matrix()));
                break;
            case Op::softmax_rows:
                if (flows_a()) {
                    Eigen::VectorXd dot = g.cwiseProduct(n.val).rowwise().sum();
                    pa->grad += n.val.cwiseProduct(g.colwise() - dot);
                }
                break;
            case Op::log:
                if (flows_a()) pa->grad += g.cwiseQuotient(pa->val);
                break;
            case Op::square:
                if (flows_a()) pa->grad += 2.0 * g.cwiseProduct(pa->val);
                break;
            case Op::clamp_min:
                if (flows_a()) pa->grad += g.cwiseProduct((pa->val.array() > n.s0).cast<double>().matrix());
                break;
            case Op::clamp:
                if (flows_a())
                    pa->grad += g.cwiseProduct(
                        ((pa->val.array() > n.s0) && (pa->val.array() < n.s1)).cast<double>().matrix());
                break;
            case Op::sum:
                if (flows_a()) pa->grad.array() += g(0, 0);
                break;
            case Op::mean_all:
                if (flows_a()) pa->grad.array() += g(0, 0) / static_cast<double>(pa->val.size());
                break;
            case Op::col_mean:
                if (flows_a())
                    pa->grad += (g / static_cast<double>(pa->val.rows())).replicate(pa->val.rows(), 1);
                break;
            case Op::row_sum:
                if (flows_a()) pa->grad += g.replicate(1, pa->val.cols());
                break;
            case Op::gather_rows:
                if (flows_a())
                    for (size_t k = 0; k < n.idx.size(); ++k)
                        pa->grad.row(n.idx[k]) += g.row(static_cast<Eigen::Index>(k));
                break;
            case Op::gather_cells:
                if (flows_a())
                    for (Eigen::Index r2 = 0; r2 < g.rows(); ++r2)
                        pa->grad(r2, n.idx[static_cast<size_t>(r2)]) += g(r2, 0);
                break;
            case Op::concat_rows:
                if (flows_a()) pa->grad += g.topRows(pa->val.rows());
                if (flows_b()) pb->grad += g.bottomRows(pb->val.rows());
                break;
            case Op::outer_flatten: {
                const auto df = pa->val.cols(), dp = pb->val.cols();
                for (Eigen::Index r2 = 0; r2 < g.rows(); ++r2)
                    for (Eigen::Index j = 0; j < df; ++j)
                        for (Eigen::Index k = 0; k < dp; ++k) {
                            const double gv = g(r2, j * dp + k);
                            if (flows_a()) pa->grad(r2, j) += gv * pb->val(r2, k);
                            if (flows_b()) pb->grad(r2, k) += gv * pa->val(r2, j);
                        }
                break;
            }
            case Op::grl:
                if (flows_a()) pa->grad -= n.s0 * g;
                break;
            case Op::sqdist: {
                Eigen::VectorXd row_tot = g.rowwise().sum();
                Eigen::VectorXd col_tot = g.colwise().sum();
                if (flows_a()) pa->grad += 2.0 * (row_tot.asDiagonal() * pa->val - g * pb->val);
                if (flows_b()) pb->grad += 2.0 * (col_tot.asDiagonal() * pb->val - g.transpose() * pa->val);
                break;
            }
            case Op::leaf: break;
        }
    }
}

}  // namespace gvida::ad
