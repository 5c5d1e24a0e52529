#pragma once

#include "cvak/binary_io.hpp"
#include "cvak/models.hpp"
#include "cvak/rng.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace cvak {

/// Where the class signal lives.
enum class Information : std::uint32_t { phase, magnitude, both };

inline std::string_view to_string(Information i)
{
    switch (i) {
    case Information::phase: return "phase";
    case Information::magnitude: return "magnitude";
    case Information::both: return "both";
    }
    return "?";
}

inline std::optional<Information> parse_information(std::string_view s)
{
    if (s == "phase") {
        return Information::phase;
    }
    if (s == "magnitude") {
        return Information::magnitude;
    }
    if (s == "both") {
        return Information::both;
    }
    return std::nullopt;
}

struct DatasetConfig {
    std::size_t classes = 4;
    std::size_t samples_per_class = 100;
    std::size_t channels = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    Information information = Information::phase;
    /// Complex Gaussian noise with E|n|^2 = noise^2.
    double noise = 0.0;
    /// Nominal pixel magnitude.
    double amplitude = 1.0;
    std::uint64_t seed = 0;

    /// Angular noise per pixel, in radians, for a pixel of the nominal magnitude.
    [[nodiscard]] double phase_noise_std() const { return noise / (std::sqrt(2.0) * amplitude); }

    /// Spacing between neighbouring class mean phases.
    [[nodiscard]] double band_spacing() const { return 2.0 * pi / static_cast<double>(classes); }

    /// Half-width of the per-sample phase jitter around each class mean,
    /// chosen so the gap between neighbouring bands is at least twice the
    /// angular noise.
    [[nodiscard]] double band_half_width() const
    {
        return 0.5 * (0.5 * band_spacing() - phase_noise_std());
    }

    void validate() const
    {
        if (classes < 2) {
            throw ConfigError("dataset: classes must be >= 2");
        }
        if (samples_per_class < 1 || channels == 0 || height == 0 || width == 0) {
            throw ConfigError("dataset: degenerate shape");
        }
        if ((height * width) % 2 != 0) {
            throw ConfigError("dataset: height*width must be even");
        }
        if (!(noise >= 0.0) || !(amplitude > 0.0)) {
            throw ConfigError("dataset: noise must be >= 0 and amplitude > 0");
        }
        if (information != Information::magnitude && !(band_half_width() > 0.0)) {
            throw ConfigError("dataset: noise too large to keep phase bands separated");
        }
    }
};

struct LabeledBatch {
    CTensor images; // [N, C, H, W]
    Labels labels;
    std::size_t classes = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

struct DatasetSplit {
    LabeledBatch train;
    LabeledBatch test;
};

/// Mean phase of class k.
inline double class_phase(std::size_t k, std::size_t classes)
{
    return -pi + (static_cast<double>(k) + 0.5) * 2.0 * pi / static_cast<double>(classes);
}

/// Balanced +-1 spatial pattern of class k. Neighbouring pixels (2p, 2p+1)
/// always carry opposite signs, so any image with an even pixel count has
/// exactly as many +1 as -1 entries.
inline double class_pattern(std::size_t k, std::size_t i, std::size_t j, std::size_t width)
{
    const std::size_t idx = i * width + j;
    const double within_pair = idx % 2 == 0 ? 1.0 : -1.0;
    const double block = ((idx / 2) / (k + 1)) % 2 == 0 ? 1.0 : -1.0;
    return within_pair * block;
}

namespace detail {

inline void fill_sample(const DatasetConfig& c, std::size_t k, CTensor& images, std::size_t n, Rng& rng)
{
    constexpr double pattern_depth = 0.3;  // radians, phase pattern
    constexpr double magnitude_depth = 0.25;
    std::uniform_real_distribution<double> jitter(-c.band_half_width(), c.band_half_width());
    std::uniform_real_distribution<double> any_phase(-pi, pi);
    std::normal_distribution<double> gauss(0.0, c.noise / std::sqrt(2.0));
    const double offset = c.information == Information::magnitude ? 0.0 : class_phase(k, c.classes) + jitter(rng);
    const double level = c.classes > 1 ? 0.4 + 1.2 * static_cast<double>(k) / static_cast<double>(c.classes - 1) : 1.0;
    const std::size_t plane = c.height * c.width;
    for (std::size_t ch = 0; ch < c.channels; ++ch) {
        for (std::size_t i = 0; i < c.height; ++i) {
            for (std::size_t j = 0; j < c.width; ++j) {
                const double s = class_pattern(k, i, j, c.width);
                double mag = c.amplitude;
                double ph = 0.0;
                switch (c.information) {
                case Information::phase:
                    ph = offset + pattern_depth * s;
                    break;
                case Information::magnitude:
                    mag = c.amplitude * level * (1.0 + magnitude_depth * s);
                    ph = any_phase(rng);
                    break;
                case Information::both:
                    mag = c.amplitude * level * (1.0 + magnitude_depth * s);
                    ph = offset + pattern_depth * s;
                    break;
                }
                cscalar v = std::polar(mag, ph);
                if (c.noise > 0.0) {
                    const double re = gauss(rng);
                    const double im = gauss(rng);
                    v += cscalar{re, im};
                }
                images[((n * c.channels + ch) * plane) + i * c.width + j] = v;
            }
        }
    }
}

} // namespace detail

/// Deterministic per seed. Per class, the first floor(0.8 n) samples go to
/// the training split and the rest to the test split; both splits are then
/// shuffled.
inline DatasetSplit generate_synthetic(const DatasetConfig& config)
{
    config.validate();
    const std::size_t per_class_train = (config.samples_per_class * 4) / 5;
    const std::size_t per_class_test = config.samples_per_class - per_class_train;
    Rng rng = make_rng(config.seed, "dataset");

    auto make_split = [&](std::size_t per_class, std::string_view purpose) {
        const std::size_t count = per_class * config.classes;
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = make_rng(config.seed, purpose);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        LabeledBatch b{CTensor({count, config.channels, config.height, config.width}), Labels(count),
                       config.classes};
        // Sample slots are filled in class-major order; `order` scatters them.
        for (std::size_t s = 0; s < count; ++s) {
            const std::size_t k = s / std::max<std::size_t>(per_class, 1);
            b.labels[order[s]] = static_cast<int>(k);
            detail::fill_sample(config, k, b.images, order[s], rng);
        }
        return b;
    };
    DatasetSplit split;
    split.train = make_split(per_class_train, "dataset-train-order");
    split.test = make_split(per_class_test, "dataset-test-order");
    return split;
}

// CVDS: "CVDS", u32 version, u32 N, u32 C, u32 H, u32 W, u32 classes,
// N*C*H*W f64 re/im pairs, N u32 labels. All little-endian.

inline constexpr std::uint32_t dataset_version = 1;

inline io::ByteWriter encode_dataset(const LabeledBatch& b)
{
    const Shape& s = b.images.shape();
    if (s.size() != 4 || s[0] != b.labels.size()) {
        throw ShapeError("save_dataset: images " + shape_string(s) + " vs " + std::to_string(b.labels.size())
                         + " labels");
    }
    io::ByteWriter w;
    w.magic("CVDS");
    w.u32(dataset_version);
    for (const auto d : s) {
        w.u32(static_cast<std::uint32_t>(d));
    }
    w.u32(static_cast<std::uint32_t>(b.classes));
    for (const auto v : b.images.data()) {
        w.f64(v.real());
        w.f64(v.imag());
    }
    for (const auto y : b.labels) {
        w.u32(static_cast<std::uint32_t>(y));
    }
    return w;
}

inline void save_dataset(const std::string& path, const LabeledBatch& b) { encode_dataset(b).write_file(path); }

inline LabeledBatch decode_dataset(io::ByteReader& r)
{
    using Code = FormatError::Code;
    r.expect_magic("CVDS");
    const auto version = r.u32("version");
    if (version != dataset_version) {
        throw FormatError(Code::bad_version, "unsupported dataset version " + std::to_string(version));
    }
    Shape shape(4);
    for (auto& d : shape) {
        d = r.u32("dimension");
    }
    LabeledBatch b;
    b.classes = r.u32("classes");
    const std::size_t values = shape_size(shape);
    if (r.remaining() < values * 16 + shape[0] * 4) {
        throw FormatError(Code::truncated, "truncated file: payload shorter than header implies");
    }
    b.images = CTensor(shape);
    for (auto& v : b.images.data()) {
        const double re = r.f64("pixel");
        const double im = r.f64("pixel");
        v = {re, im};
    }
    if (!b.images.all_finite()) {
        throw FormatError(Code::non_finite, "non-finite pixel in dataset");
    }
    b.labels.resize(shape[0]);
    for (auto& y : b.labels) {
        const auto v = r.u32("label");
        if (v >= b.classes) {
            throw FormatError(Code::bad_value, "label " + std::to_string(v) + " out of range");
        }
        y = static_cast<int>(v);
    }
    r.expect_end();
    return b;
}

inline LabeledBatch load_dataset(const std::string& path)
{
    auto r = io::ByteReader::from_file(path);
    return decode_dataset(r);
}

/// Subset of rows [begin, end).
inline LabeledBatch slice(const LabeledBatch& b, std::size_t begin, std::size_t end)
{
    return {b.images.slice(begin, end),
            Labels(b.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                   b.labels.begin() + static_cast<std::ptrdiff_t>(end)),
            b.classes};
}

} // namespace cvak
