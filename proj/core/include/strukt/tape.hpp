#pragma once

#include <span>
#include <string>
#include <vector>

#include "strukt/tensor.hpp"

namespace strukt {

// Reverse-mode computation record. Nodes are appended during the forward
// pass and visited in strict reverse order by backward(). A tape is
// single-threaded; batch parallelism is one tape per item.
class Tape {
  public:
    enum class Op {
        kInput,
        kParam,
        kMatmul,          // a [m x k] . b [k x n], optional operand transposes
        kAdd,             // same shape
        kSub,
        kMulElem,
        kAffine,          // c0 * x + c1
        kAddScaled,       // a + c0 * b
        kAddRowVec,       // x [T x C] + r [1 x C]
        kSoftmaxRows,
        kLayerNormRows,   // x, gain [1 x C], bias [1 x C]
        kGelu,            // tanh approximation
        kSigmoid,
        kGlu,             // [T x 2C] -> a * sigmoid(b)
        kDepthwiseConv1d, // x [T x C], w [K x C]; stride i0, same padding
        kSliceCols,       // [.., i0, i1)
        kMeanRowsRange,   // rows [i0, i1) -> [1 x C]
        kConcatCols,
        kReduceSum,       // -> [1 x 1]
        kReduceMean,      // -> [1 x 1]
        kLog,
        kPow,             // x^c0 (x > 0 where gradients are needed)
        kClamp,           // [c0, c1]
        kHuber,           // smooth-L1 unit, threshold c0
        kSqrtEps,         // sqrt(x + c0)
    };

    // Accounting tags for the cost profiler.
    enum class Tag { kGeneric, kAttentionScores, kAttentionProbs };

    struct Node {
        Op op;
        std::vector<int> in;
        Tensor val;
        Tensor adj;
        bool needs_grad = false;
        double c0 = 0.0, c1 = 0.0;
        int i0 = 0, i1 = 0;
        bool trans_a = false, trans_b = false;
        int param_offset = -1;  // flat offset into the parameter vector
        Tag tag = Tag::kGeneric;
    };

    int input(Tensor value);
    // Leaf over a parameter block; `flat` is copied, gradients accumulate at
    // `offset` in the vector passed to backward().
    int param(std::span<const double> flat, int rows, int cols, int offset);

    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int affine(int a, double scale, double shift);
    int add_scaled(int a, int b, double scale);
    int add_rowvec(int a, int row);
    int softmax_rows(int a);
    int layernorm_rows(int a, int gain, int bias);
    int gelu(int a);
    int sigmoid(int a);
    int glu(int a);
    int depthwise_conv1d(int x, int w, int stride);
    int slice_cols(int a, int c0, int c1);
    int mean_rows_range(int a, int r0, int r1);
    int concat_cols(const std::vector<int>& parts);
    int reduce_sum(int a);
    int reduce_mean(int a);
    int log(int a);
    int pow(int a, double exponent);
    int clamp(int a, double lo, double hi);
    int huber(int a, double beta);
    int sqrt_eps(int a, double eps);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    double scalar_value(int id) const;
    void set_tag(int id, Tag tag) { nodes_[static_cast<std::size_t>(id)].tag = tag; }

    // Reverse pass from a scalar root. Parameter gradients accumulate (+=)
    // into param_grad at each leaf's offset. Node buffers are released as the
    // sweep passes them; values must be read before calling this.
    void backward(int root, std::span<double> param_grad);

    std::size_t node_count() const { return nodes_.size(); }

    // Analytic accounting over recorded shapes (valid after backward too).
    double forward_flops() const;
    double backward_flops() const;
    double activation_floats() const;
    double tagged_floats(Tag tag) const;

  private:
    int push(Node node);
    const Tensor& val_of(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    void accumulate(int id, const Tensor& grad);
    void step_backward(int id, std::span<double> param_grad);

    std::vector<Node> nodes_;
};

}  // namespace strukt
