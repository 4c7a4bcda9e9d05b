#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "a2pd/tensor.hpp"

namespace a2pd {

// Reverse-mode differentiation tape. Nodes are appended in evaluation
// order, so node ids are already a topological order; the adjoint pass
// walks ids backwards and visits each reachable node exactly once.
//
// The adjoint pass itself emits ordinary tape nodes. Running it on the
// gradient-of-a-gradient therefore needs no special machinery: the norm
// of an input gradient is just another scalar node, and a second
// backward pass through the extended tape yields its parameter gradient.

using NodeId = std::uint32_t;
constexpr NodeId kNoNode = 0xffffffffu;

enum class OpKind : std::uint8_t {
    Const, Var,
    Add, Sub, Mul, Neg, Scale, AddC,
    Tanh, Exp, Log, XLogX, XLogXD, Recip0, PowC, Clamp,
    MatMulNN, MatMulNT, MatMulTN,
    Sum, RowSum, ColSum,
    BFill, BRows, BCols,
    Pick, Scatter1, PickRows, ScatterRows,
};

class Tape;

// Lightweight handle to a tape node.
struct Val {
    Tape* tape = nullptr;
    NodeId id = kNoNode;
    const Tensor& value() const;
};

class Tape {
public:
    struct Node {
        OpKind op;
        NodeId a = kNoNode, b = kNoNode;
        double c0 = 0.0, c1 = 0.0;     // op constants (scale factor, clamp bounds, ...)
        std::vector<std::size_t> idx;  // row indices / target shape
        Tensor value;
    };

    Val var(Tensor v) { return push(OpKind::Var, kNoNode, kNoNode, std::move(v)); }
    Val constant(Tensor v) { return push(OpKind::Const, kNoNode, kNoNode, std::move(v)); }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    // Adjoints of `root` (a scalar node) with respect to `wrt`. The pass
    // records its computation on this tape, so returned gradients are
    // themselves differentiable nodes. Variables not reached by the root
    // get a zero gradient of the matching shape.
    std::vector<Val> backward(Val root, std::span<const Val> wrt);

    // Nodes visited by the most recent backward pass (each exactly once).
    std::size_t last_backward_visits() const { return last_visits_; }

    // --- op builders -----------------------------------------------------
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);
    Val neg(Val a);
    Val scale(Val a, double c);
    Val add_c(Val a, double c);
    Val tanh(Val a);
    Val exp(Val a);
    Val log(Val a);
    Val xlogx(Val a);    // x*ln(x), 0 at x=0
    Val xlogxd(Val a);   // ln(x)+1, 0 at x=0
    Val recip0(Val a);   // 1/x,     0 at x=0
    Val pow_c(Val a, double c);
    Val clamp(Val a, double lo, double hi);
    Val matmul_nn(Val a, Val b);
    Val matmul_nt(Val a, Val b);
    Val matmul_tn(Val a, Val b);
    Val sum(Val a);
    Val row_sum(Val a);
    Val col_sum(Val a);
    Val bfill(Val s, std::vector<std::size_t> shape);
    Val brows(Val v, std::size_t rows);
    Val bcols(Val v, std::size_t cols);
    Val pick(Val a, std::size_t i);
    Val scatter1(Val s, std::size_t i, std::size_t n);
    Val pick_rows(Val a, std::vector<std::size_t> idx);
    Val scatter_rows(Val v, std::vector<std::size_t> idx, std::size_t cols);

private:
    Val push(OpKind op, NodeId a, NodeId b, Tensor value,
             double c0 = 0.0, double c1 = 0.0, std::vector<std::size_t> idx = {});
    void accumulate(std::vector<NodeId>& adj, NodeId target, Val contrib);
    void contribute(NodeId nid, Val g, std::vector<NodeId>& adj,
                    const std::vector<bool>& reach);

    std::vector<Node> nodes_;
    std::size_t last_visits_ = 0;
};

inline const Tensor& Val::value() const { return tape->value(id); }

// Feed-forward stack evaluation on a tape: per layer y = W*x^T + b with the
// hidden activation applied between layers and a linear last layer.
// `params` alternates W (rows x cols) and b (rows); `input` is a batch
// matrix [B x d]. Returns the logits node [B x out].
enum class Activation : std::uint8_t { Tanh, Identity };

Val mlp_logits(Tape& t, std::span<const Val> params, Val input, Activation hidden);

// Eager evaluation of the same stack, without a tape. Used for action
// selection in rollouts; matches mlp_logits bit for bit (same kernels,
// same order).
Tensor mlp_logits_eager(std::span<const Tensor> params, const Tensor& input,
                        Activation hidden);

// Records the forward pass of a feed-forward net on a fresh tape.
// Returns the output value, the tape, and the variable ids for the
// parameters and the input so callers can differentiate against them.
// The tape lives on the heap so the handles stay valid when the record
// moves around.
struct ForwardRecord {
    std::unique_ptr<Tape> tape;
    Val output;
    std::vector<Val> param_vars;
    Val input_var;
};

ForwardRecord forward_record(std::span<const Tensor> params, const Tensor& input,
                             Activation hidden = Activation::Tanh);

// First-order convenience: d(root)/d(wrt) as plain tensors.
std::vector<Tensor> grad(Tape& tape, Val root, std::span<const Val> wrt);

// Parameter gradient of the smoothed norm sqrt(|g|^2 + smoothing) where
// g = d(root)/d(inner). Returns the norm value and d(norm)/d(outer).
struct GradNormResult {
    double norm = 0.0;
    std::vector<Tensor> outer_grads;
};

GradNormResult grad_of_grad_norm(Tape& tape, Val root,
                                 std::span<const Val> inner_wrt,
                                 std::span<const Val> outer_wrt,
                                 double smoothing);

} // namespace a2pd
