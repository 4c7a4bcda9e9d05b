#include "a2pd/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset formats are little-endian");

namespace a2pd {

PolicyNet::PolicyNet(std::vector<std::size_t> layer_sizes, Rng& rng)
    : layer_sizes_(std::move(layer_sizes)) {
    if (layer_sizes_.size() < 2)
        throw std::invalid_argument("PolicyNet: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        std::size_t in = layer_sizes_[l], out = layer_sizes_[l + 1];
        Tensor w({out, in});
        double lim = std::sqrt(6.0 / double(in + out));
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-lim, lim);
        params_.push_back(std::move(w));
        params_.push_back(Tensor({out}));
    }
}

PolicyNet::PolicyNet(std::vector<std::size_t> layer_sizes, std::vector<Tensor> params)
    : layer_sizes_(std::move(layer_sizes)), params_(std::move(params)) {
    if (params_.size() != 2 * (layer_sizes_.size() - 1))
        throw std::invalid_argument("PolicyNet: wrong parameter count");
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        const Tensor& w = params_[2 * l];
        const Tensor& b = params_[2 * l + 1];
        if (w.shape() != std::vector<std::size_t>{layer_sizes_[l + 1], layer_sizes_[l]} ||
            b.shape() != std::vector<std::size_t>{layer_sizes_[l + 1]})
            throw std::invalid_argument("PolicyNet: parameter shape mismatch at layer " +
                                        std::to_string(l));
    }
}

std::size_t PolicyNet::param_count() const {
    std::size_t n = 0;
    for (const Tensor& p : params_) n += p.numel();
    return n;
}

Tensor PolicyNet::logits(const Tensor& obs) const {
    if (obs.numel() != input_dim())
        throw std::invalid_argument("PolicyNet: observation dim " +
                                    std::to_string(obs.numel()) + " != " +
                                    std::to_string(input_dim()));
    Tensor in({1, obs.numel()}, std::vector<double>(obs.data(), obs.data() + obs.numel()));
    Tensor out = mlp_logits_eager(params_, in, Activation::Tanh);
    return Tensor({out.numel()}, std::vector<double>(out.data(), out.data() + out.numel()));
}

Prescription softmax_prescription(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax_prescription: empty logits");
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    double sc = 0.0;
    for (double& v : p) {
        v = std::clamp(v / s, kProbClamp, 1.0 - kProbClamp);
        sc += v;
    }
    for (double& v : p) v /= sc;
    return Prescription{std::move(p)};
}

Prescription prescribe(const PolicyNet& net, const Tensor& obs) {
    Tensor z = net.logits(obs);
    return softmax_prescription(std::span<const double>(z.data(), z.numel()));
}

std::size_t select_action(const Prescription& p) {
    if (p.probs.empty()) throw std::invalid_argument("select_action: empty prescription");
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

double prescription_gap(const Prescription& p) {
    if (p.size() < 2) throw std::invalid_argument("prescription_gap: need at least 2 actions");
    double top = -1.0, second = -1.0;
    for (double v : p.probs) {
        if (v > top) {
            second = top;
            top = v;
        } else if (v > second) {
            second = v;
        }
    }
    return top - second;
}

double action_gap(const Prescription& p, std::size_t a) {
    if (p.size() < 2) throw std::invalid_argument("action_gap: need at least 2 actions");
    if (a >= p.size()) throw std::invalid_argument("action_gap: action out of range");
    double other = -1.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (i != a) other = std::max(other, p[i]);
    return p[a] - other;
}

Val prescription_rows(Tape& t, Val logits) {
    const Tensor& z = logits.value();
    if (z.rank() != 2) throw std::invalid_argument("prescription_rows: expected [B x A] logits");
    std::size_t batch = z.shape()[0], na = z.shape()[1];
    // softmax is shift-invariant, so the row max enters as a constant
    Tensor m({batch});
    for (std::size_t r = 0; r < batch; ++r) {
        double mx = z.at(r, 0);
        for (std::size_t c = 1; c < na; ++c) mx = std::max(mx, z.at(r, c));
        m[r] = mx;
    }
    Val shifted = t.sub(logits, t.bcols(t.constant(std::move(m)), na));
    Val e = t.exp(shifted);
    Val p0 = t.mul(e, t.bcols(t.pow_c(t.row_sum(e), -1.0), na));
    Val pc = t.clamp(p0, kProbClamp, 1.0 - kProbClamp);
    return t.mul(pc, t.bcols(t.pow_c(t.row_sum(pc), -1.0), na));
}

namespace {

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const PolicyNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    f.write("A2PD", 4);
    write_raw<std::uint32_t>(f, kCheckpointVersion);
    std::uint32_t layers = std::uint32_t(net.layer_sizes().size() - 1);
    write_raw(f, layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const Tensor& w = net.params()[2 * l];
        const Tensor& b = net.params()[2 * l + 1];
        write_raw<std::uint32_t>(f, std::uint32_t(w.shape()[0]));
        write_raw<std::uint32_t>(f, std::uint32_t(w.shape()[1]));
        f.write(reinterpret_cast<const char*>(w.data()), std::streamsize(w.numel() * 8));
        f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.numel() * 8));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

PolicyNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "A2PD", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    auto version = read_raw<std::uint32_t>(f);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version));
    auto layers = read_raw<std::uint32_t>(f);
    if (layers == 0 || layers > 64) throw std::runtime_error("checkpoint: bad layer count");
    std::vector<std::size_t> sizes;
    std::vector<Tensor> params;
    for (std::uint32_t l = 0; l < layers; ++l) {
        auto rows = read_raw<std::uint32_t>(f);
        auto cols = read_raw<std::uint32_t>(f);
        if (rows == 0 || cols == 0) throw std::runtime_error("checkpoint: bad layer shape");
        if (l == 0)
            sizes.push_back(cols);
        else if (sizes.back() != cols)
            throw std::runtime_error("checkpoint: inconsistent layer shapes");
        sizes.push_back(rows);
        Tensor w({rows, cols});
        f.read(reinterpret_cast<char*>(w.data()), std::streamsize(w.numel() * 8));
        Tensor b({rows});
        f.read(reinterpret_cast<char*>(b.data()), std::streamsize(b.numel() * 8));
        if (!f) throw std::runtime_error("checkpoint: truncated file");
        params.push_back(std::move(w));
        params.push_back(std::move(b));
    }
    return PolicyNet(std::move(sizes), std::move(params));
}

} // namespace a2pd
