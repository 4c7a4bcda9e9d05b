#include "a2pd/tape.hpp"

#include <cmath>

#include "a2pd/kernels.hpp"

namespace a2pd {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

void check_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected matrix, got " + t.shape_str());
}

} // namespace

Val Tape::push(OpKind op, NodeId a, NodeId b, Tensor value,
               double c0, double c1, std::vector<std::size_t> idx) {
    if (!value.all_finite())
        throw std::runtime_error("tape: non-finite value produced by op " +
                                 std::to_string(static_cast<int>(op)));
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c0 = c0;
    n.c1 = c1;
    n.idx = std::move(idx);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Val{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Val Tape::add(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_same_shape(x, y, "add");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
    return push(OpKind::Add, a.id, b.id, std::move(out));
}

Val Tape::sub(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_same_shape(x, y, "sub");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
    return push(OpKind::Sub, a.id, b.id, std::move(out));
}

Val Tape::mul(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_same_shape(x, y, "mul");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
    return push(OpKind::Mul, a.id, b.id, std::move(out));
}

Val Tape::neg(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = -x[i];
    return push(OpKind::Neg, a.id, kNoNode, std::move(out));
}

Val Tape::scale(Val a, double c) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = c * x[i];
    return push(OpKind::Scale, a.id, kNoNode, std::move(out), c);
}

Val Tape::add_c(Val a, double c) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + c;
    return push(OpKind::AddC, a.id, kNoNode, std::move(out), c);
}

Val Tape::tanh(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    kernels::tanh_ew(out.data(), x.data(), x.numel());
    return push(OpKind::Tanh, a.id, kNoNode, std::move(out));
}

Val Tape::exp(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    kernels::exp_ew(out.data(), x.data(), x.numel());
    return push(OpKind::Exp, a.id, kNoNode, std::move(out));
}

Val Tape::log(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::log(x[i]);
    return push(OpKind::Log, a.id, kNoNode, std::move(out));
}

Val Tape::xlogx(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] == 0.0 ? 0.0 : x[i] * std::log(x[i]);
    return push(OpKind::XLogX, a.id, kNoNode, std::move(out));
}

Val Tape::xlogxd(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] == 0.0 ? 0.0 : std::log(x[i]) + 1.0;
    return push(OpKind::XLogXD, a.id, kNoNode, std::move(out));
}

Val Tape::recip0(Val a) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] == 0.0 ? 0.0 : 1.0 / x[i];
    return push(OpKind::Recip0, a.id, kNoNode, std::move(out));
}

Val Tape::pow_c(Val a, double c) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::pow(x[i], c);
    return push(OpKind::PowC, a.id, kNoNode, std::move(out), c);
}

Val Tape::clamp(Val a, double lo, double hi) {
    const Tensor& x = value(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
    return push(OpKind::Clamp, a.id, kNoNode, std::move(out), lo, hi);
}

Val Tape::matmul_nn(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_matrix(x, "matmul_nn");
    check_matrix(y, "matmul_nn");
    if (x.shape()[1] != y.shape()[0])
        throw std::invalid_argument("matmul_nn: inner dim mismatch " + x.shape_str() +
                                    " * " + y.shape_str());
    Tensor out({x.shape()[0], y.shape()[1]});
    kernels::matmul_nn(out.data(), x.data(), y.data(), x.shape()[0], x.shape()[1], y.shape()[1]);
    return push(OpKind::MatMulNN, a.id, b.id, std::move(out));
}

Val Tape::matmul_nt(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_matrix(x, "matmul_nt");
    check_matrix(y, "matmul_nt");
    if (x.shape()[1] != y.shape()[1])
        throw std::invalid_argument("matmul_nt: inner dim mismatch " + x.shape_str() +
                                    " * " + y.shape_str() + "^T");
    Tensor out({x.shape()[0], y.shape()[0]});
    kernels::matmul_nt(out.data(), x.data(), y.data(), x.shape()[0], x.shape()[1], y.shape()[0]);
    return push(OpKind::MatMulNT, a.id, b.id, std::move(out));
}

Val Tape::matmul_tn(Val a, Val b) {
    const Tensor& x = value(a.id);
    const Tensor& y = value(b.id);
    check_matrix(x, "matmul_tn");
    check_matrix(y, "matmul_tn");
    if (x.shape()[0] != y.shape()[0])
        throw std::invalid_argument("matmul_tn: inner dim mismatch " + x.shape_str() +
                                    "^T * " + y.shape_str());
    Tensor out({x.shape()[1], y.shape()[1]});
    kernels::matmul_tn(out.data(), x.data(), y.data(), x.shape()[1], x.shape()[0], y.shape()[1]);
    return push(OpKind::MatMulTN, a.id, b.id, std::move(out));
}

Val Tape::sum(Val a) {
    const Tensor& x = value(a.id);
    Tensor out = Tensor::scalar(kernels::sum(x.data(), x.numel()));
    return push(OpKind::Sum, a.id, kNoNode, std::move(out));
}

Val Tape::row_sum(Val a) {
    const Tensor& x = value(a.id);
    check_matrix(x, "row_sum");
    Tensor out({x.shape()[0]});
    kernels::row_sum(out.data(), x.data(), x.shape()[0], x.shape()[1]);
    return push(OpKind::RowSum, a.id, kNoNode, std::move(out));
}

Val Tape::col_sum(Val a) {
    const Tensor& x = value(a.id);
    check_matrix(x, "col_sum");
    Tensor out({x.shape()[1]});
    kernels::col_sum(out.data(), x.data(), x.shape()[0], x.shape()[1]);
    return push(OpKind::ColSum, a.id, kNoNode, std::move(out));
}

Val Tape::bfill(Val s, std::vector<std::size_t> shape) {
    const Tensor& x = value(s.id);
    if (x.numel() != 1) throw std::invalid_argument("bfill: source must be scalar");
    Tensor out = Tensor::full(shape, x[0]);
    return push(OpKind::BFill, s.id, kNoNode, std::move(out), 0.0, 0.0, std::move(shape));
}

Val Tape::brows(Val v, std::size_t rows) {
    const Tensor& x = value(v.id);
    if (x.rank() != 1) throw std::invalid_argument("brows: expected vector");
    Tensor out({rows, x.numel()});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < x.numel(); ++c) out.at(r, c) = x[c];
    return push(OpKind::BRows, v.id, kNoNode, std::move(out), 0.0, 0.0, {rows});
}

Val Tape::bcols(Val v, std::size_t cols) {
    const Tensor& x = value(v.id);
    if (x.rank() != 1) throw std::invalid_argument("bcols: expected vector");
    Tensor out({x.numel(), cols});
    for (std::size_t r = 0; r < x.numel(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x[r];
    return push(OpKind::BCols, v.id, kNoNode, std::move(out), 0.0, 0.0, {cols});
}

Val Tape::pick(Val a, std::size_t i) {
    const Tensor& x = value(a.id);
    if (i >= x.numel()) throw std::invalid_argument("pick: index out of range");
    Tensor out = Tensor::scalar(x[i]);
    return push(OpKind::Pick, a.id, kNoNode, std::move(out), 0.0, 0.0, {i});
}

Val Tape::scatter1(Val s, std::size_t i, std::size_t n) {
    const Tensor& x = value(s.id);
    if (x.numel() != 1) throw std::invalid_argument("scatter1: source must be scalar");
    if (i >= n) throw std::invalid_argument("scatter1: index out of range");
    Tensor out({n});
    out[i] = x[0];
    return push(OpKind::Scatter1, s.id, kNoNode, std::move(out), 0.0, 0.0, {i, n});
}

Val Tape::pick_rows(Val a, std::vector<std::size_t> idx) {
    const Tensor& x = value(a.id);
    check_matrix(x, "pick_rows");
    if (idx.size() != x.shape()[0])
        throw std::invalid_argument("pick_rows: index count != rows");
    Tensor out({idx.size()});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= x.shape()[1]) throw std::invalid_argument("pick_rows: column out of range");
        out[r] = x.at(r, idx[r]);
    }
    return push(OpKind::PickRows, a.id, kNoNode, std::move(out), 0.0, 0.0, std::move(idx));
}

Val Tape::scatter_rows(Val v, std::vector<std::size_t> idx, std::size_t cols) {
    const Tensor& x = value(v.id);
    if (x.rank() != 1 || x.numel() != idx.size())
        throw std::invalid_argument("scatter_rows: vector/index size mismatch");
    Tensor out({idx.size(), cols});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= cols) throw std::invalid_argument("scatter_rows: column out of range");
        out.at(r, idx[r]) = x[r];
    }
    return push(OpKind::ScatterRows, v.id, kNoNode, std::move(out), double(cols), 0.0,
                std::move(idx));
}

void Tape::accumulate(std::vector<NodeId>& adj, NodeId target, Val contrib) {
    if (adj[target] == kNoNode)
        adj[target] = contrib.id;
    else
        adj[target] = add(Val{this, adj[target]}, contrib).id;
}

void Tape::contribute(NodeId nid, Val g, std::vector<NodeId>& adj,
                      const std::vector<bool>& reach) {
    // copy the descriptor fields: the builders below append nodes and may
    // reallocate nodes_, so no reference into it survives a call
    struct {
        OpKind op;
        NodeId a, b;
        double c0, c1;
        std::vector<std::size_t> idx;
    } n{nodes_[nid].op, nodes_[nid].a, nodes_[nid].b,
        nodes_[nid].c0, nodes_[nid].c1, nodes_[nid].idx};
    Val self{this, nid};
    Val va{this, n.a};
    Val vb{this, n.b};
    auto want_a = [&] { return n.a != kNoNode && reach[n.a]; };
    auto want_b = [&] { return n.b != kNoNode && reach[n.b]; };

    switch (n.op) {
    case OpKind::Const:
    case OpKind::Var:
        break;
    case OpKind::Add:
        if (want_a()) accumulate(adj, n.a, g);
        if (want_b()) accumulate(adj, n.b, g);
        break;
    case OpKind::Sub:
        if (want_a()) accumulate(adj, n.a, g);
        if (want_b()) accumulate(adj, n.b, neg(g));
        break;
    case OpKind::Mul:
        if (want_a()) accumulate(adj, n.a, mul(g, vb));
        if (want_b()) accumulate(adj, n.b, mul(g, va));
        break;
    case OpKind::Neg:
        if (want_a()) accumulate(adj, n.a, neg(g));
        break;
    case OpKind::Scale:
        if (want_a()) accumulate(adj, n.a, scale(g, n.c0));
        break;
    case OpKind::AddC:
        if (want_a()) accumulate(adj, n.a, g);
        break;
    case OpKind::Tanh:
        if (want_a()) accumulate(adj, n.a, mul(g, add_c(neg(mul(self, self)), 1.0)));
        break;
    case OpKind::Exp:
        if (want_a()) accumulate(adj, n.a, mul(g, self));
        break;
    case OpKind::Log:
        if (want_a()) accumulate(adj, n.a, mul(g, pow_c(va, -1.0)));
        break;
    case OpKind::XLogX:
        if (want_a()) accumulate(adj, n.a, mul(g, xlogxd(va)));
        break;
    case OpKind::XLogXD:
        if (want_a()) accumulate(adj, n.a, mul(g, recip0(va)));
        break;
    case OpKind::Recip0:
        if (want_a()) accumulate(adj, n.a, neg(mul(g, mul(recip0(va), recip0(va)))));
        break;
    case OpKind::PowC:
        if (want_a()) accumulate(adj, n.a, scale(mul(g, pow_c(va, n.c0 - 1.0)), n.c0));
        break;
    case OpKind::Clamp: {
        if (want_a()) {
            const Tensor& x = nodes_[n.a].value;
            Tensor gate(x.shape());
            for (std::size_t i = 0; i < x.numel(); ++i)
                gate[i] = (x[i] > n.c0 && x[i] < n.c1) ? 1.0 : 0.0;
            accumulate(adj, n.a, mul(g, constant(std::move(gate))));
        }
        break;
    }
    case OpKind::MatMulNN:
        if (want_a()) accumulate(adj, n.a, matmul_nt(g, vb));
        if (want_b()) accumulate(adj, n.b, matmul_tn(va, g));
        break;
    case OpKind::MatMulNT:
        if (want_a()) accumulate(adj, n.a, matmul_nn(g, vb));
        if (want_b()) accumulate(adj, n.b, matmul_tn(g, va));
        break;
    case OpKind::MatMulTN:
        if (want_a()) accumulate(adj, n.a, matmul_nt(vb, g));
        if (want_b()) accumulate(adj, n.b, matmul_nn(va, g));
        break;
    case OpKind::Sum:
        if (want_a()) accumulate(adj, n.a, bfill(g, nodes_[n.a].value.shape()));
        break;
    case OpKind::RowSum:
        if (want_a()) accumulate(adj, n.a, bcols(g, nodes_[n.a].value.shape()[1]));
        break;
    case OpKind::ColSum:
        if (want_a()) accumulate(adj, n.a, brows(g, nodes_[n.a].value.shape()[0]));
        break;
    case OpKind::BFill:
        if (want_a()) accumulate(adj, n.a, sum(g));
        break;
    case OpKind::BRows:
        if (want_a()) accumulate(adj, n.a, col_sum(g));
        break;
    case OpKind::BCols:
        if (want_a()) accumulate(adj, n.a, row_sum(g));
        break;
    case OpKind::Pick:
        if (want_a()) accumulate(adj, n.a, scatter1(g, n.idx[0], nodes_[n.a].value.numel()));
        break;
    case OpKind::Scatter1:
        if (want_a()) accumulate(adj, n.a, pick(g, n.idx[0]));
        break;
    case OpKind::PickRows:
        if (want_a())
            accumulate(adj, n.a, scatter_rows(g, n.idx, nodes_[n.a].value.shape()[1]));
        break;
    case OpKind::ScatterRows:
        if (want_a()) accumulate(adj, n.a, pick_rows(g, n.idx));
        break;
    }
}

std::vector<Val> Tape::backward(Val root, std::span<const Val> wrt) {
    if (root.tape != this) throw std::invalid_argument("backward: root from another tape");
    if (value(root.id).numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    value(root.id).shape_str());
    for (const Val& w : wrt) {
        if (w.tape != this || w.id >= nodes_.size())
            throw std::invalid_argument("backward: wrt variable not on tape");
        if (nodes_[w.id].op != OpKind::Var)
            throw std::invalid_argument("backward: wrt node is not a variable");
    }

    const std::size_t n0 = nodes_.size();

    // nodes the root depends on
    std::vector<bool> below(n0, false);
    below[root.id] = true;
    for (std::size_t id = root.id + 1; id-- > 0;) {
        if (!below[id]) continue;
        const Node& n = nodes_[id];
        if (n.a != kNoNode) below[n.a] = true;
        if (n.b != kNoNode) below[n.b] = true;
    }
    // nodes that can reach a wrt variable
    std::vector<bool> reach(n0, false);
    for (const Val& w : wrt) reach[w.id] = true;
    for (std::size_t id = 0; id < n0; ++id) {
        const Node& n = nodes_[id];
        if ((n.a != kNoNode && reach[n.a]) || (n.b != kNoNode && reach[n.b]))
            reach[id] = true;
    }
    std::vector<bool> active(n0, false);
    for (std::size_t id = 0; id < n0; ++id) active[id] = below[id] && reach[id];

    std::vector<NodeId> adj(n0, kNoNode);
    last_visits_ = 0;
    if (active[root.id]) {
        adj[root.id] = constant(Tensor::full(value(root.id).shape(), 1.0)).id;
        for (std::size_t id = root.id + 1; id-- > 0;) {
            if (!active[id] || adj[id] == kNoNode) continue;
            ++last_visits_;
            contribute(static_cast<NodeId>(id), Val{this, adj[id]}, adj, reach);
        }
    }

    std::vector<Val> out;
    out.reserve(wrt.size());
    for (const Val& w : wrt) {
        if (adj[w.id] != kNoNode)
            out.push_back(Val{this, adj[w.id]});
        else
            out.push_back(constant(Tensor(nodes_[w.id].value.shape())));
    }
    return out;
}

Val mlp_logits(Tape& t, std::span<const Val> params, Val input, Activation hidden) {
    if (params.empty() || params.size() % 2 != 0)
        throw std::invalid_argument("mlp_logits: params must alternate weight,bias");
    Val x = input;
    for (std::size_t l = 0; l * 2 < params.size(); ++l) {
        Val w = params[2 * l];
        Val b = params[2 * l + 1];
        std::size_t batch = x.value().shape()[0];
        Val z = t.add(t.matmul_nt(x, w), t.brows(b, batch));
        bool last = (2 * l + 2 == params.size());
        x = (!last && hidden == Activation::Tanh) ? t.tanh(z) : z;
    }
    return x;
}

Tensor mlp_logits_eager(std::span<const Tensor> params, const Tensor& input,
                        Activation hidden) {
    if (params.empty() || params.size() % 2 != 0)
        throw std::invalid_argument("mlp_logits_eager: params must alternate weight,bias");
    Tensor x = input;
    for (std::size_t l = 0; l * 2 < params.size(); ++l) {
        const Tensor& w = params[2 * l];
        const Tensor& b = params[2 * l + 1];
        if (x.shape()[1] != w.shape()[1])
            throw std::invalid_argument("mlp_logits_eager: input dim " + x.shape_str() +
                                        " does not match weights " + w.shape_str());
        std::size_t batch = x.shape()[0], out = w.shape()[0];
        Tensor z({batch, out});
        kernels::matmul_nt(z.data(), x.data(), w.data(), batch, x.shape()[1], out);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < out; ++c) z.at(r, c) = z.at(r, c) + b[c];
        bool last = (2 * l + 2 == params.size());
        if (!last && hidden == Activation::Tanh)
            kernels::tanh_ew(z.data(), z.data(), z.numel());
        if (!z.all_finite()) throw std::runtime_error("mlp_logits_eager: non-finite activation");
        x = std::move(z);
    }
    return x;
}

ForwardRecord forward_record(std::span<const Tensor> params, const Tensor& input,
                             Activation hidden) {
    ForwardRecord rec;
    rec.tape = std::make_unique<Tape>();
    for (const Tensor& p : params) rec.param_vars.push_back(rec.tape->var(p));
    Tensor in = input;
    if (in.rank() == 1) in = Tensor({1, in.numel()}, std::vector<double>(in.data(), in.data() + in.numel()));
    rec.input_var = rec.tape->var(std::move(in));
    rec.output = mlp_logits(*rec.tape, rec.param_vars, rec.input_var, hidden);
    return rec;
}

std::vector<Tensor> grad(Tape& tape, Val root, std::span<const Val> wrt) {
    auto vals = tape.backward(root, wrt);
    std::vector<Tensor> out;
    out.reserve(vals.size());
    for (const Val& v : vals) out.push_back(v.value());
    return out;
}

GradNormResult grad_of_grad_norm(Tape& tape, Val root,
                                 std::span<const Val> inner_wrt,
                                 std::span<const Val> outer_wrt,
                                 double smoothing) {
    if (smoothing < 0.0) throw std::invalid_argument("grad_of_grad_norm: smoothing < 0");
    auto gs = tape.backward(root, inner_wrt);
    Val acc = tape.constant(Tensor::scalar(smoothing));
    for (const Val& g : gs) acc = tape.add(acc, tape.sum(tape.mul(g, g)));
    Val norm = tape.pow_c(acc, 0.5);
    auto outer = tape.backward(norm, outer_wrt);
    GradNormResult res;
    res.norm = norm.value()[0];
    for (const Val& v : outer) res.outer_grads.push_back(v.value());
    return res;
}

} // namespace a2pd
