#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace gvida::ad {

using Mat = Eigen::MatrixXd;

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double matrices. A tape is built fresh for each
// evaluation; node creation order is the topological order, so backward() is a
// single reverse sweep. Gradients only flow into nodes reachable from a leaf.
class Tape {
public:
    Var constant(Mat value);  // excluded from gradient propagation
    Var leaf(Mat value);      // parameters and probed inputs

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var add_row(Var a, Var row);  // broadcasts a 1 x d row over every row of a
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmax_rows(Var a);  // max-subtracted, stable for large logits
    Var log(Var a);
    Var square(Var a);
    Var clamp_min(Var a, double lo);
    Var clamp(Var a, double lo, double hi);

    Var sum(Var a);       // 1x1
    Var mean_all(Var a);  // 1x1
    Var col_mean(Var a);  // 1 x d
    Var row_sum(Var a);   // n x 1

    Var gather_rows(Var a, std::vector<int> rows);
    Var gather_cells(Var a, std::vector<int> cols);  // n x 1 of a(i, cols[i])
    Var concat_rows(Var a, Var b);

    // Row i of the result is vec(f_i p_i^T) laid out f-major: h[j*dp + k].
    Var outer_flatten(Var f, Var p);

    // Identity forward; backward multiplies incoming gradient by -lambda.
    Var grl(Var a, double lambda);

    // D[i,k] = squared Euclidean distance between row i of z and row k of e.
    Var sqdist(Var z, Var e);

    const Mat& val(Var v) const;
    const Mat& grad(Var v) const;
    double scalar(Var v) const;  // value of a 1x1 node

    // root must be 1x1; seeds d(root)/d(root) = 1 and sweeps the tape.
    void backward(Var root);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    enum class Op {
        leaf, add, sub, mul, scale, add_scalar, matmul, add_row, relu, sigmoid,
        softmax_rows, log, square, clamp_min, clamp, sum, mean_all, col_mean,
        row_sum, gather_rows, gather_cells, concat_rows, outer_flatten, grl, sqdist
    };

    struct Node {
        Op op = Op::leaf;
        int a = -1, b = -1;
        double s0 = 0.0, s1 = 0.0;
        std::vector<int> idx;
        Mat val;
        Mat grad;
        bool needs_grad = false;
    };

    Var push(Node node);
    Var unary(Op op, Var a, double s0 = 0.0, double s1 = 0.0);
    Var binary(Op op, Var a, Var b);
    const Node& at(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace gvida::ad
