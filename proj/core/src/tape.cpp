#include "strukt/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace strukt {
namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EArr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap map(const Tensor& t) { return ECMap(t.data.data(), t.rows, t.cols); }
EMap map(Tensor& t) { return EMap(t.data.data(), t.rows, t.cols); }

constexpr double kLnEps = 1e-5;  // layernorm variance epsilon
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Tape::push(Node node) {
    if (node.op != Op::kInput && node.op != Op::kParam) {
        for (int p : node.in)
            if (nodes_[static_cast<std::size_t>(p)].needs_grad) node.needs_grad = true;
    }
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor value) {
    Node n;
    n.op = Op::kInput;
    n.val = std::move(value);
    return push(std::move(n));
}

int Tape::param(std::span<const double> flat, int rows, int cols, int offset) {
    if (flat.size() != static_cast<std::size_t>(rows) * cols)
        throw ContractError("tape: parameter block size mismatch");
    Node n;
    n.op = Op::kParam;
    n.val = Tensor(rows, cols, std::vector<double>(flat.begin(), flat.end()));
    n.needs_grad = true;
    n.param_offset = offset;
    return push(std::move(n));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    const Tensor& A = val_of(a);
    const Tensor& B = val_of(b);
    const int m = trans_a ? A.cols : A.rows;
    const int k = trans_a ? A.rows : A.cols;
    const int kb = trans_b ? B.cols : B.rows;
    const int nn = trans_b ? B.rows : B.cols;
    if (k != kb) throw ContractError("tape: matmul inner dimensions differ");
    Node n;
    n.op = Op::kMatmul;
    n.in = {a, b};
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.val = Tensor(m, nn);
    auto Y = map(n.val);
    if (!trans_a && !trans_b)
        Y.noalias() = map(A) * map(B);
    else if (trans_a && !trans_b)
        Y.noalias() = map(A).transpose() * map(B);
    else if (!trans_a && trans_b)
        Y.noalias() = map(A) * map(B).transpose();
    else
        Y.noalias() = map(A).transpose() * map(B).transpose();
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor& A = val_of(a);
    const Tensor& B = val_of(b);
    if (A.rows != B.rows || A.cols != B.cols) throw ContractError("tape: add shape mismatch");
    Node n;
    n.op = Op::kAdd;
    n.in = {a, b};
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = map(A) + map(B);
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    const Tensor& A = val_of(a);
    const Tensor& B = val_of(b);
    if (A.rows != B.rows || A.cols != B.cols) throw ContractError("tape: sub shape mismatch");
    Node n;
    n.op = Op::kSub;
    n.in = {a, b};
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = map(A) - map(B);
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor& A = val_of(a);
    const Tensor& B = val_of(b);
    if (A.rows != B.rows || A.cols != B.cols) throw ContractError("tape: mul shape mismatch");
    Node n;
    n.op = Op::kMulElem;
    n.in = {a, b};
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = map(A).cwiseProduct(map(B));
    return push(std::move(n));
}

int Tape::affine(int a, double scale, double shift) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kAffine;
    n.in = {a};
    n.c0 = scale;
    n.c1 = shift;
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = scale * map(A).array() + shift;
    return push(std::move(n));
}

int Tape::add_scaled(int a, int b, double scale) {
    const Tensor& A = val_of(a);
    const Tensor& B = val_of(b);
    if (A.rows != B.rows || A.cols != B.cols) throw ContractError("tape: add_scaled shape mismatch");
    Node n;
    n.op = Op::kAddScaled;
    n.in = {a, b};
    n.c0 = scale;
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = map(A) + scale * map(B);
    return push(std::move(n));
}

int Tape::add_rowvec(int a, int row) {
    const Tensor& A = val_of(a);
    const Tensor& R = val_of(row);
    if (R.rows != 1 || R.cols != A.cols) throw ContractError("tape: add_rowvec shape mismatch");
    Node n;
    n.op = Op::kAddRowVec;
    n.in = {a, row};
    n.val = Tensor(A.rows, A.cols);
    map(n.val) = map(A).rowwise() + map(R).row(0);
    return push(std::move(n));
}

int Tape::softmax_rows(int a) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kSoftmaxRows;
    n.in = {a};
    n.val = Tensor(A.rows, A.cols);
    auto Y = map(n.val);
    const Eigen::VectorXd row_max = map(A).rowwise().maxCoeff();
    Y.array() = (map(A).array().colwise() - row_max.array()).exp();
    const Eigen::VectorXd sums = Y.rowwise().sum();
    Y.array().colwise() /= sums.array();
    return push(std::move(n));
}

int Tape::layernorm_rows(int a, int gain, int bias) {
    const Tensor& A = val_of(a);
    const Tensor& G = val_of(gain);
    const Tensor& B = val_of(bias);
    if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols)
        throw ContractError("tape: layernorm gain/bias shape mismatch");
    Node n;
    n.op = Op::kLayerNormRows;
    n.in = {a, gain, bias};
    n.val = Tensor(A.rows, A.cols);
    auto X = map(A);
    auto Y = map(n.val);
    const Eigen::VectorXd mean = X.rowwise().mean();
    Y.array() = X.array().colwise() - mean.array();
    const Eigen::VectorXd inv =
        ((Y.array().square().rowwise().mean() + kLnEps).sqrt()).inverse();
    Y.array().colwise() *= inv.array();
    Y.array().rowwise() *= map(G).array().row(0);
    Y.array().rowwise() += map(B).array().row(0);
    return push(std::move(n));
}

int Tape::gelu(int a) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kGelu;
    n.in = {a};
    n.val = Tensor(A.rows, A.cols);
    auto X = map(A).array();
    map(n.val).array() = 0.5 * X * (1.0 + (kGeluC * (X + 0.044715 * X.cube())).tanh());
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kSigmoid;
    n.in = {a};
    n.val = Tensor(A.rows, A.cols);
    map(n.val).array() = 1.0 / (1.0 + (-map(A).array()).exp());
    return push(std::move(n));
}

int Tape::glu(int a) {
    const Tensor& A = val_of(a);
    if (A.cols % 2 != 0) throw ContractError("tape: glu needs an even column count");
    const int half = A.cols / 2;
    Node n;
    n.op = Op::kGlu;
    n.in = {a};
    n.val = Tensor(A.rows, half);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < half; ++c)
            n.val.at(r, c) = A.at(r, c) * sigmoid_scalar(A.at(r, c + half));
    return push(std::move(n));
}

int Tape::depthwise_conv1d(int x, int w, int stride) {
    const Tensor& X = val_of(x);
    const Tensor& W = val_of(w);
    if (W.cols != X.cols) throw ContractError("tape: depthwise conv channel mismatch");
    if (W.rows % 2 != 1) throw ContractError("tape: depthwise conv kernel must be odd");
    if (stride < 1) throw ContractError("tape: depthwise conv stride must be >= 1");
    const int K = W.rows;
    const int pad = (K - 1) / 2;
    const int t_out = (X.rows + stride - 1) / stride;
    Node n;
    n.op = Op::kDepthwiseConv1d;
    n.in = {x, w};
    n.i0 = stride;
    n.val = Tensor(t_out, X.cols);
    for (int t = 0; t < t_out; ++t)
        for (int k = 0; k < K; ++k) {
            const int src = t * stride + k - pad;
            if (src < 0 || src >= X.rows) continue;
            for (int c = 0; c < X.cols; ++c) n.val.at(t, c) += X.at(src, c) * W.at(k, c);
        }
    return push(std::move(n));
}

int Tape::slice_cols(int a, int c0, int c1) {
    const Tensor& A = val_of(a);
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw ContractError("tape: slice_cols range invalid");
    Node n;
    n.op = Op::kSliceCols;
    n.in = {a};
    n.i0 = c0;
    n.i1 = c1;
    n.val = Tensor(A.rows, c1 - c0);
    map(n.val) = map(A).middleCols(c0, c1 - c0);
    return push(std::move(n));
}

int Tape::mean_rows_range(int a, int r0, int r1) {
    const Tensor& A = val_of(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw ContractError("tape: mean_rows_range invalid");
    Node n;
    n.op = Op::kMeanRowsRange;
    n.in = {a};
    n.i0 = r0;
    n.i1 = r1;
    n.val = Tensor(1, A.cols);
    map(n.val) = map(A).middleRows(r0, r1 - r0).colwise().mean();
    return push(std::move(n));
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw ContractError("tape: concat of nothing");
    int rows = val_of(parts[0]).rows;
    int cols = 0;
    for (int p : parts) {
        if (val_of(p).rows != rows) throw ContractError("tape: concat row mismatch");
        cols += val_of(p).cols;
    }
    Node n;
    n.op = Op::kConcatCols;
    n.in = parts;
    n.val = Tensor(rows, cols);
    int at = 0;
    for (int p : parts) {
        map(n.val).middleCols(at, val_of(p).cols) = map(val_of(p));
        at += val_of(p).cols;
    }
    return push(std::move(n));
}

int Tape::reduce_sum(int a) {
    Node n;
    n.op = Op::kReduceSum;
    n.in = {a};
    n.val = Tensor::scalar(map(val_of(a)).sum());
    return push(std::move(n));
}

int Tape::reduce_mean(int a) {
    Node n;
    n.op = Op::kReduceMean;
    n.in = {a};
    n.val = Tensor::scalar(map(val_of(a)).mean());
    return push(std::move(n));
}

int Tape::log(int a) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kLog;
    n.in = {a};
    n.val = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) n.val.data[i] = std::log(A.data[i]);
    return push(std::move(n));
}

int Tape::pow(int a, double exponent) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kPow;
    n.in = {a};
    n.c0 = exponent;
    n.val = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) n.val.data[i] = std::pow(A.data[i], exponent);
    return push(std::move(n));
}

int Tape::clamp(int a, double lo, double hi) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kClamp;
    n.in = {a};
    n.c0 = lo;
    n.c1 = hi;
    n.val = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) n.val.data[i] = std::clamp(A.data[i], lo, hi);
    return push(std::move(n));
}

int Tape::huber(int a, double beta) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kHuber;
    n.in = {a};
    n.c0 = beta;
    n.val = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) {
        const double d = A.data[i];
        n.val.data[i] = std::abs(d) < beta ? 0.5 * d * d / beta : std::abs(d) - 0.5 * beta;
    }
    return push(std::move(n));
}

int Tape::sqrt_eps(int a, double eps) {
    const Tensor& A = val_of(a);
    Node n;
    n.op = Op::kSqrtEps;
    n.in = {a};
    n.c0 = eps;
    n.val = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) n.val.data[i] = std::sqrt(A.data[i] + eps);
    return push(std::move(n));
}

double Tape::scalar_value(int id) const {
    const Tensor& t = val_of(id);
    if (t.rows != 1 || t.cols != 1) throw ContractError("tape: node is not scalar");
    return t.data[0];
}

void Tape::accumulate(int id, const Tensor& grad) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (!n.adj.allocated() || n.adj.data.empty()) {
        n.adj = grad;
        return;
    }
    map(n.adj) += map(grad);
}

void Tape::backward(int root, std::span<double> param_grad) {
    Node& r = nodes_[static_cast<std::size_t>(root)];
    if (r.val.rows != 1 || r.val.cols != 1)
        throw ContractError("tape: backward root must be scalar");
    if (!r.needs_grad) return;  // loss does not depend on any parameter
    r.adj = Tensor::scalar(1.0);

    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.needs_grad && !n.adj.data.empty()) step_backward(id, param_grad);
        // Free as the sweep passes; shapes stay for accounting.
        n.adj.release();
        if (id != root) n.val.release();
    }
}

void Tape::step_backward(int id, std::span<double> param_grad) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& dy = n.adj;

    switch (n.op) {
        case Op::kInput:
            break;
        case Op::kParam: {
            if (n.param_offset < 0 ||
                static_cast<std::size_t>(n.param_offset) + n.val.size() > param_grad.size())
                throw ContractError("tape: parameter gradient range out of bounds");
            double* g = param_grad.data() + n.param_offset;
            for (std::size_t i = 0; i < n.val.size(); ++i) g[i] += dy.data[i];
            break;
        }
        case Op::kMatmul: {
            const int a = n.in[0], b = n.in[1];
            const Tensor& A = val_of(a);
            const Tensor& B = val_of(b);
            const bool ta = n.trans_a, tb = n.trans_b;
            if (nodes_[static_cast<std::size_t>(a)].needs_grad) {
                Tensor da(A.rows, A.cols);
                if (!ta && !tb)
                    map(da).noalias() = map(dy) * map(B).transpose();
                else if (!ta && tb)
                    map(da).noalias() = map(dy) * map(B);
                else if (ta && !tb)
                    map(da).noalias() = map(B) * map(dy).transpose();
                else
                    map(da).noalias() = map(B).transpose() * map(dy).transpose();
                accumulate(a, da);
            }
            if (nodes_[static_cast<std::size_t>(b)].needs_grad) {
                Tensor db(B.rows, B.cols);
                if (!ta && !tb)
                    map(db).noalias() = map(A).transpose() * map(dy);
                else if (!ta && tb)
                    map(db).noalias() = map(dy).transpose() * map(A);
                else if (ta && !tb)
                    map(db).noalias() = map(A) * map(dy);
                else
                    map(db).noalias() = map(dy).transpose() * map(A).transpose();
                accumulate(b, db);
            }
            break;
        }
        case Op::kAdd:
            accumulate(n.in[0], dy);
            accumulate(n.in[1], dy);
            break;
        case Op::kSub: {
            accumulate(n.in[0], dy);
            if (nodes_[static_cast<std::size_t>(n.in[1])].needs_grad) {
                Tensor db(dy.rows, dy.cols);
                map(db) = -map(dy);
                accumulate(n.in[1], db);
            }
            break;
        }
        case Op::kMulElem: {
            const Tensor& A = val_of(n.in[0]);
            const Tensor& B = val_of(n.in[1]);
            if (nodes_[static_cast<std::size_t>(n.in[0])].needs_grad) {
                Tensor da(A.rows, A.cols);
                map(da) = map(dy).cwiseProduct(map(B));
                accumulate(n.in[0], da);
            }
            if (nodes_[static_cast<std::size_t>(n.in[1])].needs_grad) {
                Tensor db(B.rows, B.cols);
                map(db) = map(dy).cwiseProduct(map(A));
                accumulate(n.in[1], db);
            }
            break;
        }
        case Op::kAffine: {
            Tensor da(dy.rows, dy.cols);
            map(da) = n.c0 * map(dy);
            accumulate(n.in[0], da);
            break;
        }
        case Op::kAddScaled: {
            accumulate(n.in[0], dy);
            if (nodes_[static_cast<std::size_t>(n.in[1])].needs_grad) {
                Tensor db(dy.rows, dy.cols);
                map(db) = n.c0 * map(dy);
                accumulate(n.in[1], db);
            }
            break;
        }
        case Op::kAddRowVec: {
            accumulate(n.in[0], dy);
            if (nodes_[static_cast<std::size_t>(n.in[1])].needs_grad) {
                Tensor dr(1, dy.cols);
                map(dr) = map(dy).colwise().sum();
                accumulate(n.in[1], dr);
            }
            break;
        }
        case Op::kSoftmaxRows: {
            // dx = y .* (dy - rowsum(dy .* y))
            const Tensor& Y = n.val;
            Tensor dx(Y.rows, Y.cols);
            const Eigen::VectorXd dot = map(dy).cwiseProduct(map(Y)).rowwise().sum();
            map(dx).array() =
                map(Y).array() * (map(dy).array().colwise() - dot.array());
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kLayerNormRows: {
            const Tensor& X = val_of(n.in[0]);
            const Tensor& G = val_of(n.in[1]);
            const int C = X.cols;
            Tensor dx(X.rows, X.cols);
            Tensor dg(1, C);
            Tensor db(1, C);
            // xhat = (x - mean) * inv; y = xhat * g + b
            const Eigen::VectorXd mean = map(X).rowwise().mean();
            EArr xhat = map(X).array().colwise() - mean.array();
            const Eigen::VectorXd inv =
                ((xhat.square().rowwise().mean() + kLnEps).sqrt()).inverse();
            xhat.colwise() *= inv.array();
            const EArr dxhat = map(dy).array().rowwise() * map(G).array().row(0);
            const Eigen::VectorXd mean_dxhat = dxhat.rowwise().mean();
            const Eigen::VectorXd mean_dxhat_xhat = (dxhat * xhat).rowwise().mean();
            map(dx).array() = ((dxhat.colwise() - mean_dxhat.array()) -
                               (xhat.colwise() * mean_dxhat_xhat.array()))
                                  .colwise() *
                              inv.array();
            map(dg).array() = (map(dy).array() * xhat).colwise().sum();
            map(db) = map(dy).colwise().sum();
            accumulate(n.in[0], dx);
            accumulate(n.in[1], dg);
            accumulate(n.in[2], db);
            break;
        }
        case Op::kGelu: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            auto x = map(X).array();
            const EArr th = (kGeluC * (x + 0.044715 * x.cube())).tanh();
            const EArr du = kGeluC * (1.0 + 3.0 * 0.044715 * x.square());
            map(dx).array() =
                map(dy).array() * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * du);
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kSigmoid: {
            const Tensor& Y = n.val;
            Tensor dx(Y.rows, Y.cols);
            for (std::size_t i = 0; i < Y.size(); ++i)
                dx.data[i] = dy.data[i] * Y.data[i] * (1.0 - Y.data[i]);
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kGlu: {
            const Tensor& X = val_of(n.in[0]);
            const int half = X.cols / 2;
            Tensor dx(X.rows, X.cols);
            for (int r = 0; r < X.rows; ++r)
                for (int c = 0; c < half; ++c) {
                    const double a = X.at(r, c);
                    const double s = sigmoid_scalar(X.at(r, c + half));
                    const double g = dy.at(r, c);
                    dx.at(r, c) = g * s;
                    dx.at(r, c + half) = g * a * s * (1.0 - s);
                }
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kDepthwiseConv1d: {
            const Tensor& X = val_of(n.in[0]);
            const Tensor& W = val_of(n.in[1]);
            const int K = W.rows;
            const int pad = (K - 1) / 2;
            const int stride = n.i0;
            const bool need_dx = nodes_[static_cast<std::size_t>(n.in[0])].needs_grad;
            const bool need_dw = nodes_[static_cast<std::size_t>(n.in[1])].needs_grad;
            Tensor dx(X.rows, X.cols);
            Tensor dw(W.rows, W.cols);
            for (int t = 0; t < dy.rows; ++t)
                for (int k = 0; k < K; ++k) {
                    const int src = t * stride + k - pad;
                    if (src < 0 || src >= X.rows) continue;
                    for (int c = 0; c < X.cols; ++c) {
                        const double g = dy.at(t, c);
                        if (need_dx) dx.at(src, c) += g * W.at(k, c);
                        if (need_dw) dw.at(k, c) += g * X.at(src, c);
                    }
                }
            if (need_dx) accumulate(n.in[0], dx);
            if (need_dw) accumulate(n.in[1], dw);
            break;
        }
        case Op::kSliceCols: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            map(dx).middleCols(n.i0, n.i1 - n.i0) = map(dy);
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kMeanRowsRange: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            const double inv = 1.0 / (n.i1 - n.i0);
            for (int r = n.i0; r < n.i1; ++r)
                for (int c = 0; c < X.cols; ++c) dx.at(r, c) = dy.at(0, c) * inv;
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kConcatCols: {
            int at = 0;
            for (int p : n.in) {
                const Tensor& P = val_of(p);
                if (nodes_[static_cast<std::size_t>(p)].needs_grad) {
                    Tensor dp(P.rows, P.cols);
                    map(dp) = map(dy).middleCols(at, P.cols);
                    accumulate(p, dp);
                }
                at += P.cols;
            }
            break;
        }
        case Op::kReduceSum: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            map(dx).setConstant(dy.data[0]);
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kReduceMean: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            map(dx).setConstant(dy.data[0] / static_cast<double>(X.size()));
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kLog: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            for (std::size_t i = 0; i < X.size(); ++i) dx.data[i] = dy.data[i] / X.data[i];
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kPow: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            for (std::size_t i = 0; i < X.size(); ++i)
                dx.data[i] = dy.data[i] * n.c0 * std::pow(X.data[i], n.c0 - 1.0);
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kClamp: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            for (std::size_t i = 0; i < X.size(); ++i)
                dx.data[i] = (X.data[i] > n.c0 && X.data[i] < n.c1) ? dy.data[i] : 0.0;
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kHuber: {
            const Tensor& X = val_of(n.in[0]);
            Tensor dx(X.rows, X.cols);
            for (std::size_t i = 0; i < X.size(); ++i) {
                const double d = X.data[i];
                const double slope = std::abs(d) < n.c0 ? d / n.c0 : (d > 0 ? 1.0 : -1.0);
                dx.data[i] = dy.data[i] * slope;
            }
            accumulate(n.in[0], dx);
            break;
        }
        case Op::kSqrtEps: {
            const Tensor& Y = n.val;
            Tensor dx(Y.rows, Y.cols);
            for (std::size_t i = 0; i < Y.size(); ++i)
                dx.data[i] = dy.data[i] * 0.5 / Y.data[i];
            accumulate(n.in[0], dx);
            break;
        }
    }
}

double Tape::forward_flops() const {
    double total = 0.0;
    for (const auto& n : nodes_) {
        const double sz = static_cast<double>(n.val.size());
        switch (n.op) {
            case Op::kInput:
            case Op::kParam:
                break;
            case Op::kMatmul: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.in[0])].val;
                const double k = n.trans_a ? A.rows : A.cols;
                total += 2.0 * static_cast<double>(n.val.rows) * n.val.cols * k;
                break;
            }
            case Op::kDepthwiseConv1d: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.in[1])].val;
                total += 2.0 * sz * W.rows;
                break;
            }
            case Op::kSoftmaxRows:
                total += 5.0 * sz;
                break;
            case Op::kLayerNormRows:
                total += 8.0 * sz;
                break;
            case Op::kGelu:
                total += 10.0 * sz;
                break;
            case Op::kGlu:
                total += 6.0 * sz;
                break;
            case Op::kSigmoid:
                total += 4.0 * sz;
                break;
            default:
                total += 2.0 * sz;
                break;
        }
    }
    return total;
}

double Tape::backward_flops() const {
    // Matmul/conv backward is two forward-sized products; elementwise about
    // the same again. A fixed per-op model keeps the counter exact across
    // runs and identical for identical shapes.
    double total = 0.0;
    for (const auto& n : nodes_) {
        const double sz = static_cast<double>(n.val.size());
        switch (n.op) {
            case Op::kInput:
            case Op::kParam:
                break;
            case Op::kMatmul: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.in[0])].val;
                const double k = n.trans_a ? A.rows : A.cols;
                total += 4.0 * static_cast<double>(n.val.rows) * n.val.cols * k;
                break;
            }
            case Op::kDepthwiseConv1d: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.in[1])].val;
                total += 4.0 * sz * W.rows;
                break;
            }
            case Op::kLayerNormRows:
                total += 12.0 * sz;
                break;
            case Op::kGelu:
                total += 12.0 * sz;
                break;
            default:
                total += 3.0 * sz;
                break;
        }
    }
    return total;
}

double Tape::activation_floats() const {
    double total = 0.0;
    for (const auto& n : nodes_) total += static_cast<double>(n.val.size());
    return total;
}

double Tape::tagged_floats(Tag tag) const {
    double total = 0.0;
    for (const auto& n : nodes_)
        if (n.tag == tag) total += static_cast<double>(n.val.size());
    return total;
}

}  // namespace strukt
