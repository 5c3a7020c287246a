#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pdn/errors.hpp"
#include "pdn/geometry.hpp"
#include "pdn/ops.hpp"
#include "pdn/optim.hpp"
#include "pdn/rng.hpp"
#include "pdn/stats.hpp"
#include "pdn/tensor.hpp"

namespace pdn {

// Global load condition: (mass, force magnitude, unit direction).
struct LoadCondition {
    double mass = 1.0;
    double force = 1.0;
    Vec3 direction{0, 0, 1};

    void validate() const {
        if (!(mass > 0.0)) throw ValidationError("load condition: mass must be > 0");
        if (force < 0.0) throw ValidationError("load condition: force must be >= 0");
        if (std::abs(norm(direction) - 1.0) > 1e-9)
            throw ValidationError("load condition: direction must be a unit vector, |d| = " +
                                  std::to_string(norm(direction)));
    }
};

enum class Architecture { PointNet, DeepONet, PointDeepONet };

inline const char* architecture_name(Architecture a) {
    switch (a) {
        case Architecture::PointNet: return "pointnet";
        case Architecture::DeepONet: return "deeponet";
        case Architecture::PointDeepONet: return "point_deeponet";
    }
    return "?";
}

inline Architecture architecture_from_name(const std::string& s) {
    if (s == "pointnet") return Architecture::PointNet;
    if (s == "deeponet") return Architecture::DeepONet;
    if (s == "point_deeponet") return Architecture::PointDeepONet;
    throw ValidationError("unknown architecture '" + s + "'");
}

// Architecture selection plus the width/activation knobs. The shipped
// defaults are desk-scale; the branch/trunk/cloud lists end at the latent
// size H so the final latent dot product lines up.
struct ModelSpec {
    Architecture architecture = Architecture::PointDeepONet;
    int64_t latent = 128;
    double omega = 30.0;  // sine frequency of the SIREN trunk
    bool use_mass = true;
    bool use_sdf = true;
    int64_t head_fields = 4;  // (u_x, u_y, u_z, von Mises)

    std::vector<int64_t> branch_widths{64, 128};   // condition MLP, SiLU, final linear
    std::vector<int64_t> trunk_widths{128, 128};   // operator trunk ladder
    std::vector<int64_t> fusion_widths{128};       // post-fusion shared MLP
    std::vector<int64_t> cloud_widths{64, 128};    // point-cloud encoder ladder
    double pointnet_scale = 0.53;                  // channel scaling of the canonical ladder

    void validate() const {
        if (latent < 1) throw ValidationError("model spec: latent size must be >= 1");
        if (head_fields < 1) throw ValidationError("model spec: head fields must be >= 1");
        if (architecture == Architecture::PointNet) {
            if (use_sdf)
                throw ValidationError("model spec: pointnet has no trunk; use_sdf must be false");
            if (!(pointnet_scale > 0.0))
                throw ValidationError("model spec: pointnet scale must be > 0");
            return;
        }
        if (branch_widths.empty() || trunk_widths.empty())
            throw ValidationError("model spec: width lists must be non-empty");
        if (branch_widths.back() != latent)
            throw ValidationError("model spec: branch output width " +
                                  std::to_string(branch_widths.back()) + " must equal latent " +
                                  std::to_string(latent));
        if (architecture == Architecture::PointDeepONet) {
            if (fusion_widths.empty() || cloud_widths.empty())
                throw ValidationError("model spec: width lists must be non-empty");
            if (trunk_widths.back() != latent || cloud_widths.back() != latent)
                throw ValidationError("model spec: trunk/cloud output widths must equal latent " +
                                      std::to_string(latent));
        }
    }

    HeadKind head() const {
        return architecture == Architecture::PointNet ? HeadKind::Sigmoid : HeadKind::Tanh;
    }

    // Canonical PointNet channel ladders scaled and rounded to nearest.
    std::vector<int64_t> pointnet_encoder() const {
        std::vector<int64_t> out;
        for (int64_t c : {64, 64, 64, 128, 1024})
            out.push_back(std::max<int64_t>(1, std::llround(pointnet_scale * static_cast<double>(c))));
        return out;
    }
    std::vector<int64_t> pointnet_head() const {
        std::vector<int64_t> out;
        for (int64_t c : {512, 256, 128})
            out.push_back(std::max<int64_t>(1, std::llround(pointnet_scale * static_cast<double>(c))));
        return out;
    }
};

// Per-point predictions [B,N,fields]; values are in normalized (head) space
// until denormalized by the inference layer.
struct FieldPrediction {
    Tensor values;
    bool normalized = true;
};

// --- layers -----------------------------------------------------------------

namespace detail {

enum class Init { Xavier, He, SirenFirst, SirenHidden };

struct DenseLayer {
    Tensor w, b;
};

struct BnLayer {
    Tensor gamma, beta;
    BatchNormState state;
    explicit BnLayer(int64_t ch = 0) : state(ch) {}
};

inline DenseLayer make_dense(int64_t fan_in, int64_t fan_out, Init init, double omega, Rng& rng) {
    double bound = 0.0;
    switch (init) {
        case Init::Xavier: bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); break;
        case Init::He: bound = std::sqrt(6.0 / static_cast<double>(fan_in)); break;
        case Init::SirenFirst: bound = 1.0 / static_cast<double>(fan_in); break;
        case Init::SirenHidden: bound = std::sqrt(6.0 / static_cast<double>(fan_in)) / omega; break;
    }
    std::vector<double> wv(static_cast<size_t>(fan_in * fan_out));
    for (auto& v : wv) v = rng.uniform(-bound, bound);
    DenseLayer layer;
    layer.w = Tensor::from({fan_in, fan_out}, std::move(wv)).set_requires_grad();
    layer.b = Tensor::zeros({fan_out}).set_requires_grad();
    return layer;
}

}  // namespace detail

// Inputs to any architecture, already normalized by FieldStats: condition is
// [B,5] in the fixed order (m, f, dx, dy, dz) with the direction kept raw;
// coords is [B,N,3]; sdf is [B,N] and may be left undefined when the source
// carries no SDF.
struct ModelInputs {
    Tensor condition;
    Tensor coords;
    Tensor sdf;
};

namespace detail {

// The 1e-3 slack (vs the 1e-9 contract at condition construction) leaves room
// for finite-difference probes of the inputs during gradient checks.
inline void check_directions(const Tensor& condition) {
    if (condition.rank() != 2 || condition.dim(1) != 5)
        throw ShapeError("condition must be [B,5], got " + shape_str(condition.shape()));
    const auto& v = condition.values();
    for (int64_t b = 0; b < condition.dim(0); ++b) {
        double dx = v[static_cast<size_t>(b * 5 + 2)], dy = v[static_cast<size_t>(b * 5 + 3)],
               dz = v[static_cast<size_t>(b * 5 + 4)];
        double n = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (std::abs(n - 1.0) > 1e-3)
            throw ValidationError("non-unit load direction in batch row " + std::to_string(b) +
                                  ": |d| = " + std::to_string(n));
    }
}

}  // namespace detail

// Shared output head of the operator models: tanh of the latent dot product.
inline Tensor latent_head(const Tensor& branch_features, const Tensor& trunk_features) {
    return activation(latent_dot(branch_features, trunk_features), Act::Tanh);
}

// --- model interface ----------------------------------------------------------

class Model {
public:
    virtual ~Model() = default;
    const ModelSpec& spec() const { return spec_; }
    Architecture architecture() const { return spec_.architecture; }
    HeadKind head() const { return spec_.head(); }

    // Returns [B,N,head_fields] in normalized head space.
    virtual Tensor forward(const ModelInputs& in, bool train, bool update_running = true) = 0;

    std::vector<Param>& parameters() { return params_; }
    const std::vector<Param>& parameters() const { return params_; }
    std::vector<BatchNormState*>& bn_states() { return bn_states_; }

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.value.zero_grad();
    }

protected:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}

    void register_dense(const std::string& name, detail::DenseLayer& layer) {
        params_.push_back({name + ".weight", layer.w});
        params_.push_back({name + ".bias", layer.b});
    }
    void register_bn(const std::string& name, detail::BnLayer& layer) {
        params_.push_back({name + ".gamma", layer.gamma});
        params_.push_back({name + ".beta", layer.beta});
        bn_states_.push_back(&layer.state);
    }
    detail::BnLayer make_bn(int64_t ch) {
        detail::BnLayer layer(ch);
        layer.gamma = Tensor::full({ch}, 1.0).set_requires_grad();
        layer.beta = Tensor::zeros({ch}).set_requires_grad();
        return layer;
    }

    ModelSpec spec_;
    std::vector<Param> params_;
    std::vector<BatchNormState*> bn_states_;
};

// --- PointNet ------------------------------------------------------------------

// Shared pointwise MLP encoder -> max-pooled global feature -> global feature
// tiled back onto the points, concatenated with mid-level local features ->
// pointwise decoder -> sigmoid head. Channels: (x,y,z,m,f,dx,dy,dz).
class PointNetModel : public Model {
public:
    PointNetModel(ModelSpec spec, uint64_t seed) : Model(std::move(spec)) {
        spec_.validate();
        Rng rng(seed);
        const auto enc = spec_.pointnet_encoder();
        const auto dec = spec_.pointnet_head();
        // bn_states_ keeps pointers into these vectors; no reallocation allowed
        encoder_bn_.reserve(enc.size());
        decoder_bn_.reserve(dec.size());
        int64_t in_ch = 8;
        for (size_t i = 0; i < enc.size(); ++i) {
            encoder_.push_back(detail::make_dense(in_ch, enc[i], detail::Init::He, 0, rng));
            encoder_bn_.push_back(make_bn(enc[i]));
            register_dense("encoder." + std::to_string(i), encoder_.back());
            register_bn("encoder." + std::to_string(i) + ".bn", encoder_bn_.back());
            in_ch = enc[i];
        }
        local_channels_ = enc[1];
        int64_t dec_in = enc.back() + local_channels_;
        for (size_t i = 0; i < dec.size(); ++i) {
            decoder_.push_back(detail::make_dense(dec_in, dec[i], detail::Init::He, 0, rng));
            decoder_bn_.push_back(make_bn(dec[i]));
            register_dense("decoder." + std::to_string(i), decoder_.back());
            register_bn("decoder." + std::to_string(i) + ".bn", decoder_bn_.back());
            dec_in = dec[i];
        }
        head_ = detail::make_dense(dec_in, spec_.head_fields, detail::Init::Xavier, 0, rng);
        register_dense("head", head_);
    }

    Tensor forward(const ModelInputs& in, bool train, bool update_running = true) override {
        detail::check_directions(in.condition);
        const int64_t n = in.coords.dim(1);
        Tensor cond = in.condition;
        if (!spec_.use_mass) cond = channel_mask(cond, {0, 1, 1, 1, 1});
        Tensor features = concat_channels(in.coords, tile_points(cond, n));
        Tensor h = features;
        Tensor local;
        for (size_t i = 0; i < encoder_.size(); ++i) {
            h = dense(h, encoder_[i].w, encoder_[i].b);
            h = batchnorm(h, encoder_bn_[i].gamma, encoder_bn_[i].beta, encoder_bn_[i].state,
                          train, update_running);
            h = activation(h, Act::Relu);
            if (i == 1) local = h;
        }
        Tensor global = maxpool_points(h);
        h = concat_channels(local, tile_points(global, n));
        for (size_t i = 0; i < decoder_.size(); ++i) {
            h = dense(h, decoder_[i].w, decoder_[i].b);
            h = batchnorm(h, decoder_bn_[i].gamma, decoder_bn_[i].beta, decoder_bn_[i].state,
                          train, update_running);
            h = activation(h, Act::Relu);
        }
        return activation(dense(h, head_.w, head_.b), Act::Sigmoid);
    }

private:
    std::vector<detail::DenseLayer> encoder_, decoder_;
    std::vector<detail::BnLayer> encoder_bn_, decoder_bn_;
    detail::DenseLayer head_;
    int64_t local_channels_ = 0;
};

// --- DeepONet --------------------------------------------------------------------

// Branch: condition MLP (SiLU, final linear) -> B in R^{B,H}.
// Trunk: (x,y,z,sdf) MLP (SiLU) -> per-point features in R^{B,N,H,M}.
// Output per point and field: tanh(sum_h B_h * T_{h,m}).
class DeepONetModel : public Model {
public:
    DeepONetModel(ModelSpec spec, uint64_t seed) : Model(std::move(spec)) {
        spec_.validate();
        Rng rng(seed);
        int64_t in = 5;
        for (size_t i = 0; i < spec_.branch_widths.size(); ++i) {
            branch_.push_back(detail::make_dense(in, spec_.branch_widths[i], detail::Init::Xavier, 0, rng));
            register_dense("branch." + std::to_string(i), branch_.back());
            in = spec_.branch_widths[i];
        }
        in = 4;
        for (size_t i = 0; i < spec_.trunk_widths.size(); ++i) {
            trunk_.push_back(detail::make_dense(in, spec_.trunk_widths[i], detail::Init::Xavier, 0, rng));
            register_dense("trunk." + std::to_string(i), trunk_.back());
            in = spec_.trunk_widths[i];
        }
        trunk_out_ = detail::make_dense(in, spec_.latent * spec_.head_fields, detail::Init::Xavier, 0, rng);
        register_dense("trunk.out", trunk_out_);
    }

    Tensor branch_latent(const Tensor& condition) {
        detail::check_directions(condition);
        Tensor h = condition;
        if (!spec_.use_mass) h = channel_mask(h, {0, 1, 1, 1, 1});
        for (size_t i = 0; i < branch_.size(); ++i) {
            h = dense(h, branch_[i].w, branch_[i].b);
            if (i + 1 < branch_.size()) h = activation(h, Act::Silu);
        }
        return h;
    }

    Tensor trunk_features(const Tensor& coords, const Tensor& sdf) {
        Tensor h = trunk_input(coords, sdf, spec_);
        for (auto& layer : trunk_) h = activation(dense(h, layer.w, layer.b), Act::Silu);
        h = dense(h, trunk_out_.w, trunk_out_.b);
        return reshape(h, {coords.dim(0), coords.dim(1), spec_.latent, spec_.head_fields});
    }

    Tensor forward(const ModelInputs& in, bool /*train*/, bool /*update_running*/ = true) override {
        return latent_head(branch_latent(in.condition), trunk_features(in.coords, in.sdf));
    }

    // Assembles [B,N,4] = (x,y,z,sdf); missing SDF is a schema error when the
    // spec asked for it, and a zero channel otherwise.
    static Tensor trunk_input(const Tensor& coords, const Tensor& sdf, const ModelSpec& spec) {
        if (coords.rank() != 3 || coords.dim(2) != 3)
            throw ShapeError("trunk queries must be [B,N,3], got " + shape_str(coords.shape()));
        Tensor sdf_col;
        if (sdf.defined()) {
            if (sdf.rank() != 2 || sdf.dim(0) != coords.dim(0) || sdf.dim(1) != coords.dim(1))
                throw ShapeError("sdf " + shape_str(sdf.shape()) + " incompatible with queries " +
                                 shape_str(coords.shape()));
            sdf_col = reshape(sdf, {coords.dim(0), coords.dim(1), 1});
        } else {
            if (spec.use_sdf)
                throw SchemaError("model expects SDF trunk input (use_sdf=true) but none was provided");
            sdf_col = Tensor::zeros({coords.dim(0), coords.dim(1), 1});
        }
        Tensor h = concat_channels(coords, sdf_col);
        if (!spec.use_sdf) h = channel_mask(h, {1, 1, 1, 0});
        return h;
    }

private:
    std::vector<detail::DenseLayer> branch_, trunk_;
    detail::DenseLayer trunk_out_;
};

// --- Point-DeepONet ------------------------------------------------------------------

// Branch: condition MLP plus a PointNet encoder over the cloud, summed into
// B^alpha. Trunk: SIREN over (x,y,z,sdf) -> T^alpha. Early fusion
// F = B^alpha ⊙ T^alpha, a shared post-fusion MLP, then per-point heads
// B^beta in R^{B,N,H} and T^beta in R^{B,N,H,M} combined by the latent dot
// product under tanh.
class PointDeepONetModel : public Model {
public:
    PointDeepONetModel(ModelSpec spec, uint64_t seed) : Model(std::move(spec)) {
        spec_.validate();
        Rng rng(seed);
        cloud_bn_.reserve(spec_.cloud_widths.size());  // bn_states_ points in here
        int64_t in = 5;
        for (size_t i = 0; i < spec_.branch_widths.size(); ++i) {
            cond_.push_back(detail::make_dense(in, spec_.branch_widths[i], detail::Init::Xavier, 0, rng));
            register_dense("branch.cond." + std::to_string(i), cond_.back());
            in = spec_.branch_widths[i];
        }
        in = 3;
        for (size_t i = 0; i < spec_.cloud_widths.size(); ++i) {
            cloud_.push_back(detail::make_dense(in, spec_.cloud_widths[i], detail::Init::He, 0, rng));
            cloud_bn_.push_back(make_bn(spec_.cloud_widths[i]));
            register_dense("branch.cloud." + std::to_string(i), cloud_.back());
            register_bn("branch.cloud." + std::to_string(i) + ".bn", cloud_bn_.back());
            in = spec_.cloud_widths[i];
        }
        in = 4;
        for (size_t i = 0; i < spec_.trunk_widths.size(); ++i) {
            auto init = i == 0 ? detail::Init::SirenFirst : detail::Init::SirenHidden;
            trunk_.push_back(detail::make_dense(in, spec_.trunk_widths[i], init, spec_.omega, rng));
            register_dense("trunk." + std::to_string(i), trunk_.back());
            in = spec_.trunk_widths[i];
        }
        in = spec_.latent;
        for (size_t i = 0; i < spec_.fusion_widths.size(); ++i) {
            fusion_.push_back(detail::make_dense(in, spec_.fusion_widths[i], detail::Init::Xavier, 0, rng));
            register_dense("fusion." + std::to_string(i), fusion_.back());
            in = spec_.fusion_widths[i];
        }
        head_b_ = detail::make_dense(in, spec_.latent, detail::Init::Xavier, 0, rng);
        register_dense("head.branch", head_b_);
        head_t_ = detail::make_dense(in, spec_.latent * spec_.head_fields, detail::Init::Xavier, 0, rng);
        register_dense("head.trunk", head_t_);
    }

    // B^alpha = B^(C) + B^(P): condition embedding plus max-pooled cloud embedding.
    Tensor branch_alpha(const Tensor& condition, const Tensor& cloud, bool train,
                        bool update_running = true) {
        detail::check_directions(condition);
        Tensor c = condition;
        if (!spec_.use_mass) c = channel_mask(c, {0, 1, 1, 1, 1});
        for (size_t i = 0; i < cond_.size(); ++i) {
            c = dense(c, cond_[i].w, cond_[i].b);
            if (i + 1 < cond_.size()) c = activation(c, Act::Silu);
        }
        Tensor p = cloud;
        for (size_t i = 0; i < cloud_.size(); ++i) {
            p = dense(p, cloud_[i].w, cloud_[i].b);
            p = batchnorm(p, cloud_bn_[i].gamma, cloud_bn_[i].beta, cloud_bn_[i].state, train,
                          update_running);
            p = activation(p, Act::Relu);
        }
        return add(c, maxpool_points(p));
    }

    // T^alpha: SIREN features of (x,y,z,sdf) per query point.
    Tensor trunk_alpha(const Tensor& coords, const Tensor& sdf) {
        Tensor h = DeepONetModel::trunk_input(coords, sdf, spec_);
        for (auto& layer : trunk_)
            h = activation(dense(h, layer.w, layer.b), Act::Sine, spec_.omega);
        return h;
    }

    // Fusion, post-fusion MLP, and the final dual-head latent dot product.
    Tensor head_from_alpha(const Tensor& balpha, const Tensor& talpha) {
        Tensor f = scale_points(balpha, talpha);
        for (auto& layer : fusion_) f = activation(dense(f, layer.w, layer.b), Act::Silu);
        Tensor bbeta = dense(f, head_b_.w, head_b_.b);
        Tensor tbeta = reshape(dense(f, head_t_.w, head_t_.b),
                               {f.dim(0), f.dim(1), spec_.latent, spec_.head_fields});
        return latent_head(bbeta, tbeta);
    }

    Tensor forward(const ModelInputs& in, bool train, bool update_running = true) override {
        // one cloud feeds both paths: the branch sees the same resampled points
        Tensor balpha = branch_alpha(in.condition, in.coords, train, update_running);
        return head_from_alpha(balpha, trunk_alpha(in.coords, in.sdf));
    }

private:
    std::vector<detail::DenseLayer> cond_, cloud_, trunk_, fusion_;
    std::vector<detail::BnLayer> cloud_bn_;
    detail::DenseLayer head_b_, head_t_;
};

inline std::unique_ptr<Model> make_model(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    switch (spec.architecture) {
        case Architecture::PointNet: return std::make_unique<PointNetModel>(spec, seed);
        case Architecture::DeepONet: return std::make_unique<DeepONetModel>(spec, seed);
        case Architecture::PointDeepONet: return std::make_unique<PointDeepONetModel>(spec, seed);
    }
    throw ValidationError("unknown architecture");
}

// Exact trainable scalar count (weights + biases + batchnorm gamma/beta).
inline int64_t count_parameters(const ModelSpec& spec) {
    return make_model(spec, 0)->parameter_count();
}

}  // namespace pdn
