#include "sll/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace sll::data {
namespace {

constexpr std::size_t kChannels = 3;
constexpr double kBaseLimit = 0.85;

const std::array<std::array<double, 3>, 4> kClassPalette{{
    {0.70, -0.30, -0.30},
    {-0.30, 0.60, -0.30},
    {-0.30, -0.30, 0.70},
    {0.60, 0.60, -0.40},
}};

bool inside_shape(int cls, double dx, double dy, double r, double stripe) {
    switch (cls) {
        case 0: return dx * dx + dy * dy <= r * r;
        case 1: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
        case 2:
            return (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) || (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
        case 3: {
            if (std::abs(dx) > r || std::abs(dy) > r) return false;
            return static_cast<long>(std::floor((dy + r) / stripe)) % 2 == 0;
        }
        default: return false;
    }
}

ImageDataset pick(const ImageDataset& ds, std::span<const std::size_t> rows, Provenance provenance) {
    ImageDataset out;
    out.images = ds.images.gather_batch(rows);
    out.labels = ds.batch_labels(rows);
    out.class_names = ds.class_names;
    out.provenance = provenance;
    return out;
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::synthetic: return "synthetic";
        case Provenance::cifar10_bin: return "cifar10-bin";
        case Provenance::filtered: return "filtered";
        case Provenance::subsampled: return "subsampled";
    }
    return "unknown";
}

nn::Tensor ImageDataset::batch_images(std::span<const std::size_t> indices) const {
    return images.gather_batch(indices);
}

std::vector<int> ImageDataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

void ImageDataset::validate() const {
    if (images.rank() != 4) throw std::invalid_argument("dataset images must be [N,C,H,W]");
    if (images.batch() != labels.size()) throw std::invalid_argument("dataset image/label count mismatch");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= class_names.size())
            throw std::invalid_argument("dataset label out of range");
    for (double v : images.values())
        if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("dataset pixel outside [-1,1]");
}

void SyntheticSpec::validate() const {
    if (image_size != 16 && image_size != 32) throw std::invalid_argument("synthetic image size must be 16 or 32");
    if (num_classes < 2 || num_classes > kClassPalette.size())
        throw std::invalid_argument("synthetic num_classes must be in [2,4]");
    if (color_jitter < 0 || position_jitter < 0 || background_noise < 0 || texture_amplitude < 0)
        throw std::invalid_argument("synthetic render parameters must be non-negative");
    for (double o : palette_offset)
        if (std::abs(o) + texture_amplitude > 1.0 - kBaseLimit)
            throw std::invalid_argument("palette offset plus texture must stay within 0.15");
}

const std::set<int>& living_classes() {
    static const std::set<int> s{0, 1};
    return s;
}

const std::set<int>& non_living_classes() {
    static const std::set<int> s{2, 3};
    return s;
}

std::vector<std::string> synthetic_class_names(std::size_t num_classes) {
    static const char* names[] = {"disk", "square", "cross", "stripes"};
    return {names, names + std::min<std::size_t>(num_classes, 4)};
}

ImageDataset gen_synthetic(const SyntheticSpec& spec, std::size_t n, nn::Rng& rng) {
    spec.validate();
    if (n == 0) throw std::invalid_argument("gen_synthetic: n must be positive");
    if (n < spec.num_classes) throw std::invalid_argument("gen_synthetic: n smaller than class count");

    const std::size_t size = spec.image_size;
    const double half = static_cast<double>(size) / 2.0 - 0.5;
    const double stripe = static_cast<double>(size) / 8.0;

    ImageDataset ds;
    ds.class_names = synthetic_class_names(spec.num_classes);
    ds.provenance = Provenance::synthetic;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % spec.num_classes);
    rng.shuffle(ds.labels);
    ds.images = nn::Tensor({n, kChannels, size, size});

    for (std::size_t i = 0; i < n; ++i) {
        const int cls = ds.labels[i];
        const double cx = half + rng.uniform(-spec.position_jitter, spec.position_jitter);
        const double cy = half + rng.uniform(-spec.position_jitter, spec.position_jitter);
        const double r = 0.28 * static_cast<double>(size) * rng.uniform(0.85, 1.15);
        std::array<double, 3> fg{}, bg{};
        for (std::size_t c = 0; c < kChannels; ++c) {
            fg[c] = kClassPalette[static_cast<std::size_t>(cls)][c] + rng.uniform(-spec.color_jitter, spec.color_jitter);
            bg[c] = -0.5 + rng.uniform(-0.15, 0.15);
        }
        double* img = ds.images.data() + i * kChannels * size * size;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const bool on = inside_shape(cls, static_cast<double>(x) - cx, static_cast<double>(y) - cy, r, stripe);
                const double checker = ((x + y) % 2 == 0) ? 1.0 : -1.0;
                for (std::size_t c = 0; c < kChannels; ++c) {
                    double v = (on ? fg[c] : bg[c]) + spec.background_noise * rng.normal();
                    v = std::clamp(v, -kBaseLimit, kBaseLimit);
                    if (spec.domain_shift) v += spec.palette_offset[c] + spec.texture_amplitude * checker;
                    img[(c * size + y) * size + x] = v;
                }
            }
    }
    return ds;
}

std::uint8_t quantize_pixel(double v) {
    const double b = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(b);
}

ImageDataset decode_cifar10(std::span<const std::uint8_t> bytes, std::size_t image_size) {
    const std::size_t plane = image_size * image_size;
    const std::size_t record = 1 + kChannels * plane;
    if (bytes.empty() || bytes.size() % record != 0)
        throw std::runtime_error("cifar10: truncated file (" + std::to_string(bytes.size()) +
                                 " bytes is not a positive multiple of " + std::to_string(record) + ")");
    const std::size_t n = bytes.size() / record;
    ImageDataset ds;
    ds.provenance = Provenance::cifar10_bin;
    ds.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
    ds.images = nn::Tensor({n, kChannels, image_size, image_size});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * record;
        if (rec[0] > 9) throw std::runtime_error("cifar10: label byte " + std::to_string(rec[0]) + " > 9");
        ds.labels[i] = rec[0];
        double* img = ds.images.data() + i * kChannels * plane;
        for (std::size_t k = 0; k < kChannels * plane; ++k) img[k] = static_cast<double>(rec[1 + k]) / 127.5 - 1.0;
    }
    return ds;
}

ImageDataset load_cifar10(const std::filesystem::path& path, std::size_t image_size) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cifar10: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_cifar10(bytes, image_size);
}

std::vector<std::uint8_t> encode_cifar_style(const ImageDataset& ds) {
    ds.validate();
    const auto shape = ds.image_shape();
    if (shape[0] != kChannels || shape[1] != shape[2]) throw std::invalid_argument("cifar format needs 3xSxS images");
    const std::size_t per = ds.images.sample_size();
    std::vector<std::uint8_t> out;
    out.reserve(ds.size() * (per + 1));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] > 255) throw std::invalid_argument("label does not fit in one byte");
        out.push_back(static_cast<std::uint8_t>(ds.labels[i]));
        for (double v : ds.images.row(i)) out.push_back(quantize_pixel(v));
    }
    return out;
}

void write_cifar_style(const ImageDataset& ds, const std::filesystem::path& path) {
    const auto bytes = encode_cifar_style(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageDataset filter_categories(const ImageDataset& ds, const std::set<int>& keep) {
    if (keep.empty()) throw std::invalid_argument("filter_categories: empty keep set");
    for (int k : keep)
        if (k < 0 || static_cast<std::size_t>(k) >= ds.num_classes())
            throw std::invalid_argument("filter_categories: class " + std::to_string(k) + " not in dataset");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (keep.count(ds.labels[i])) rows.push_back(i);
    if (rows.empty()) throw std::invalid_argument("filter_categories: no images remain");
    return pick(ds, rows, Provenance::filtered);
}

ImageDataset subsample(const ImageDataset& ds, std::size_t n, nn::Rng& rng) {
    if (n < 1 || n > ds.size())
        throw std::invalid_argument("subsample: n=" + std::to_string(n) + " outside [1, " + std::to_string(ds.size()) +
                                    "]");
    auto perm = rng.permutation(ds.size());
    perm.resize(n);
    return pick(ds, perm, Provenance::subsampled);
}

}  // namespace sll::data
