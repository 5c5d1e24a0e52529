#pragma once

#include "cvak/autodiff.hpp"
#include "cvak/binary_io.hpp"
#include "cvak/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cvak {

enum class ModelKind : std::uint32_t { rvnn = 0, cvnn = 1 };

/// How a real-valued network consumes complex pixels.
enum class InputEncoding : std::uint32_t { reim = 0, magphase = 1 };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::rvnn ? "rvnn" : "cvnn"; }
inline std::string_view to_string(InputEncoding e) { return e == InputEncoding::reim ? "reim" : "magphase"; }

inline std::optional<ModelKind> parse_model_kind(std::string_view s)
{
    if (s == "rvnn") {
        return ModelKind::rvnn;
    }
    if (s == "cvnn") {
        return ModelKind::cvnn;
    }
    return std::nullopt;
}

inline std::optional<InputEncoding> parse_encoding(std::string_view s)
{
    if (s == "reim") {
        return InputEncoding::reim;
    }
    if (s == "magphase") {
        return InputEncoding::magphase;
    }
    return std::nullopt;
}

using Labels = std::vector<int>;

struct ModelConfig {
    ModelKind kind = ModelKind::cvnn;
    InputEncoding encoding = InputEncoding::reim; // rvnn only
    std::size_t channels = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    std::vector<std::size_t> conv_channels{4, 8};
    std::vector<std::size_t> hidden{16};
    std::size_t classes = 4;
    std::size_t kernel = 3;
    /// Fixed multiplier applied to the input before the first layer.
    double input_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (classes < 2) {
            throw ConfigError("model: class count must be >= 2");
        }
        if (channels == 0 || height == 0 || width == 0) {
            throw ConfigError("model: zero-sized input shape");
        }
        for (const auto w : conv_channels) {
            if (w == 0) {
                throw ConfigError("model: zero-sized conv layer");
            }
        }
        for (const auto w : hidden) {
            if (w == 0) {
                throw ConfigError("model: zero-sized hidden layer");
            }
        }
        if (kernel % 2 == 0) {
            throw ConfigError("model: kernel size must be odd");
        }
        if (!(input_scale > 0.0) || !std::isfinite(input_scale)) {
            throw ConfigError("model: input_scale must be positive and finite");
        }
    }

    /// Input channels seen by the first conv layer.
    [[nodiscard]] std::size_t first_layer_channels() const
    {
        return kind == ModelKind::rvnn ? 2 * channels : channels;
    }

    /// Spatial size after the conv stages; each stage pools 2x2 while both
    /// sides stay even.
    [[nodiscard]] std::pair<std::size_t, std::size_t> feature_map() const
    {
        std::size_t h = height;
        std::size_t w = width;
        for (std::size_t s = 0; s < conv_channels.size(); ++s) {
            if (h % 2 == 0 && w % 2 == 0) {
                h /= 2;
                w /= 2;
            }
        }
        return {h, w};
    }
};

class Model {
public:
    Model(ModelConfig config, std::vector<CTensor> parameters)
        : config_(std::move(config)), params_(std::move(parameters))
    {
    }

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::span<const CTensor> parameters() const noexcept { return params_; }
    [[nodiscard]] std::span<CTensor> parameters() noexcept { return params_; }

    /// True when parameter `i` is constrained to real values.
    [[nodiscard]] bool real_parameter(std::size_t i) const
    {
        return config_.kind == ModelKind::rvnn || i + 2 >= params_.size();
    }

    /// Real degrees of freedom: complex entries count twice.
    [[nodiscard]] std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            n += params_[i].size() * (real_parameter(i) ? 1 : 2);
        }
        return n;
    }

    std::vector<Var> bind(Tape& tape, bool requires_grad) const
    {
        std::vector<Var> vars;
        vars.reserve(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            vars.push_back(tape.leaf(params_[i], requires_grad, real_parameter(i)));
        }
        return vars;
    }

    /// Logits [B, classes] for input [B, C, H, W].
    Var forward(Tape& tape, Var input, std::span<const Var> params) const
    {
        const CTensor& x = tape.value(input);
        if (x.rank() != 4 || x.dim(1) != config_.channels || x.dim(2) != config_.height
            || x.dim(3) != config_.width) {
            throw ShapeError("model: input shape " + shape_string(x.shape()) + " does not match config ["
                             + std::to_string(config_.channels) + "," + std::to_string(config_.height) + ","
                             + std::to_string(config_.width) + "]");
        }
        const std::size_t batch = x.dim(0);
        Var h = input;
        if (config_.input_scale != 1.0) {
            h = ad::scale(tape, h, config_.input_scale);
        }
        if (config_.kind == ModelKind::rvnn) {
            h = config_.encoding == InputEncoding::reim ? ad::encode_reim(tape, h) : ad::encode_magphase(tape, h);
        }
        std::size_t p = 0;
        for (std::size_t s = 0; s < config_.conv_channels.size(); ++s) {
            h = ad::conv2d(tape, h, params[p++]);
            h = ad::add_bias(tape, h, params[p++]);
            h = ad::split_relu(tape, h);
            const CTensor& hv = tape.value(h);
            if (hv.dim(2) % 2 == 0 && hv.dim(3) % 2 == 0) {
                h = ad::avg_pool2(tape, h);
            }
        }
        h = ad::reshape(tape, h, {batch, tape.value(h).size() / std::max<std::size_t>(batch, 1)});
        for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
            h = ad::matmul(tape, h, params[p++]);
            h = ad::add_bias(tape, h, params[p++]);
            h = ad::split_relu(tape, h);
        }
        if (config_.kind == ModelKind::cvnn) {
            h = ad::magnitude_readout(tape, h);
        }
        h = ad::matmul(tape, h, params[p++]);
        h = ad::add_bias(tape, h, params[p]);
        return ad::real_part(tape, h);
    }

    [[nodiscard]] CTensor logits(const CTensor& x) const
    {
        Tape tape;
        const auto params = bind(tape, false);
        const Var in = tape.constant(x);
        return tape.value(forward(tape, in, params));
    }

    [[nodiscard]] Labels predict(const CTensor& x) const
    {
        const CTensor lg = logits(x);
        const std::size_t b = lg.dim(0);
        const std::size_t k = lg.dim(1);
        Labels out(b);
        for (std::size_t n = 0; n < b; ++n) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (lg[n * k + j].real() > lg[n * k + best].real()) {
                    best = j;
                }
            }
            out[n] = static_cast<int>(best);
        }
        return out;
    }

private:
    ModelConfig config_;
    std::vector<CTensor> params_;
};

namespace detail {

inline CTensor init_weights(Shape shape, std::size_t fan_in, bool complex, Rng& rng)
{
    CTensor w(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::uniform_real_distribution<double> mag(0.0, bound);
    std::uniform_real_distribution<double> ang(-pi, pi);
    for (auto& v : w.data()) {
        v = complex ? std::polar(mag(rng), ang(rng)) : cscalar{uni(rng), 0.0};
    }
    return w;
}

} // namespace detail

/// Deterministic parameters from config.seed. Layout: per conv stage
/// (kernel [O,C,k,k], bias [O]); per hidden layer (weight [in,out], bias
/// [out]); final real affine layer (weight [in,classes], bias [classes]).
inline Model build_model(const ModelConfig& config)
{
    config.validate();
    Rng rng = make_rng(config.seed, "model-init");
    const bool complex = config.kind == ModelKind::cvnn;
    std::vector<CTensor> params;
    std::size_t in_ch = config.first_layer_channels();
    for (const auto out_ch : config.conv_channels) {
        const std::size_t fan_in = in_ch * config.kernel * config.kernel;
        params.push_back(detail::init_weights({out_ch, in_ch, config.kernel, config.kernel}, fan_in, complex, rng));
        params.push_back(CTensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    const auto [fh, fw] = config.feature_map();
    std::size_t features = in_ch * fh * fw;
    for (const auto width : config.hidden) {
        params.push_back(detail::init_weights({features, width}, features, complex, rng));
        params.push_back(CTensor::zeros({width}));
        features = width;
    }
    params.push_back(detail::init_weights({features, config.classes}, features, false, rng));
    params.push_back(CTensor::zeros({config.classes}));
    return Model(config, std::move(params));
}

struct LossAndGradient {
    double loss = 0.0;
    WirtingerGradient grad;
};

/// Cross-entropy of the model on (x, labels) and dl/dx̄. With
/// Reduction::sum the gradient of each sample is that of its own loss,
/// independent of the batch it is evaluated in.
inline LossAndGradient loss_and_gradient(const Model& model, const CTensor& x, std::span<const int> labels,
                                         ad::Reduction reduction = ad::Reduction::mean)
{
    if (x.rank() == 0 || x.dim(0) != labels.size()) {
        throw ShapeError("loss_and_gradient: batch of " + shape_string(x.shape()) + " vs "
                         + std::to_string(labels.size()) + " labels");
    }
    Tape tape;
    const auto params = model.bind(tape, false);
    const Var in = tape.leaf(x, true);
    const Var logits = model.forward(tape, in, params);
    const Var loss = ad::softmax_cross_entropy(tape, logits, labels, reduction);
    const Gradients grads = backward(tape, loss);
    return {tape.value(loss)[0].real(), grads.wrt(in)};
}

inline double loss_value(const Model& model, const CTensor& x, std::span<const int> labels,
                         ad::Reduction reduction = ad::Reduction::mean)
{
    Tape tape;
    const auto params = model.bind(tape, false);
    const Var in = tape.constant(x);
    const Var loss = ad::softmax_cross_entropy(tape, model.forward(tape, in, params), labels, reduction);
    return tape.value(loss)[0].real();
}

inline double accuracy(const Model& model, const CTensor& x, std::span<const int> labels)
{
    if (labels.empty()) {
        return 0.0;
    }
    const Labels pred = model.predict(x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += pred[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Checkpoint: "CVAK", u32 version, config, u32 tensor count, then per tensor
// u32 rank, u32 dims..., and f64 re/im pairs. All little-endian.

inline constexpr std::uint32_t checkpoint_version = 1;

inline void write_checkpoint(io::ByteWriter& w, const Model& model)
{
    const ModelConfig& c = model.config();
    w.magic("CVAK");
    w.u32(checkpoint_version);
    w.u32(static_cast<std::uint32_t>(c.kind));
    w.u32(static_cast<std::uint32_t>(c.encoding));
    w.u32(static_cast<std::uint32_t>(c.channels));
    w.u32(static_cast<std::uint32_t>(c.height));
    w.u32(static_cast<std::uint32_t>(c.width));
    w.u32(static_cast<std::uint32_t>(c.kernel));
    w.u32(static_cast<std::uint32_t>(c.conv_channels.size()));
    for (const auto v : c.conv_channels) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.u32(static_cast<std::uint32_t>(c.hidden.size()));
    for (const auto v : c.hidden) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.u32(static_cast<std::uint32_t>(c.classes));
    w.f64(c.input_scale);
    w.u64(c.seed);
    w.u32(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        w.u32(static_cast<std::uint32_t>(p.rank()));
        for (const auto d : p.shape()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (const auto v : p.data()) {
            w.f64(v.real());
            w.f64(v.imag());
        }
    }
}

inline void save_checkpoint(const std::string& path, const Model& model)
{
    io::ByteWriter w;
    write_checkpoint(w, model);
    w.write_file(path);
}

inline Model read_checkpoint(io::ByteReader& r)
{
    using Code = FormatError::Code;
    r.expect_magic("CVAK");
    const auto version = r.u32("version");
    if (version != checkpoint_version) {
        throw FormatError(Code::bad_version, "unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig c;
    const auto kind = r.u32("kind");
    const auto enc = r.u32("encoding");
    if (kind > 1 || enc > 1) {
        throw FormatError(Code::bad_value, "unknown model kind or encoding");
    }
    c.kind = static_cast<ModelKind>(kind);
    c.encoding = static_cast<InputEncoding>(enc);
    c.channels = r.u32("channels");
    c.height = r.u32("height");
    c.width = r.u32("width");
    c.kernel = r.u32("kernel");
    c.conv_channels.resize(r.u32("conv stage count"));
    for (auto& v : c.conv_channels) {
        v = r.u32("conv width");
    }
    c.hidden.resize(r.u32("hidden count"));
    for (auto& v : c.hidden) {
        v = r.u32("hidden width");
    }
    c.classes = r.u32("classes");
    c.input_scale = r.f64("input scale");
    c.seed = r.u64("seed");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(Code::bad_value, std::string("checkpoint config invalid: ") + e.what());
    }
    const Model reference = build_model(c);
    const auto count = r.u32("parameter count");
    if (count != reference.parameters().size()) {
        throw FormatError(Code::bad_value, "parameter count does not match config");
    }
    std::vector<CTensor> params;
    for (std::uint32_t i = 0; i < count; ++i) {
        Shape shape(r.u32("rank"));
        for (auto& d : shape) {
            d = r.u32("dimension");
        }
        if (shape != reference.parameters()[i].shape()) {
            throw FormatError(Code::bad_value, "parameter " + std::to_string(i) + " has shape " + shape_string(shape)
                                                   + ", config implies "
                                                   + shape_string(reference.parameters()[i].shape()));
        }
        CTensor p(shape);
        for (auto& v : p.data()) {
            const double re = r.f64("parameter");
            const double im = r.f64("parameter");
            v = {re, im};
        }
        if (!p.all_finite()) {
            throw FormatError(Code::non_finite, "non-finite parameter in checkpoint");
        }
        params.push_back(std::move(p));
    }
    r.expect_end();
    return Model(std::move(c), std::move(params));
}

inline Model load_checkpoint(const std::string& path)
{
    auto r = io::ByteReader::from_file(path);
    return read_checkpoint(r);
}

} // namespace cvak
