#include "sll/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace sll::metrics {
namespace {

double unit(double v) { return 0.5 * (v + 1.0); }

nn::Tensor as_image(const nn::Tensor& t) {
    if (t.rank() == 3) return t;
    if (t.rank() == 4 && t.dim(0) == 1) return t.reshaped(t.sample_shape());
    throw std::invalid_argument("expected one [C,H,W] image, got " + nn::shape_string(t.shape()));
}

// Extended precision keeps closed-form cases (an offset of 0.1 giving
// 20 dB) exact after rounding back to double.
long double mse_extended(const nn::Tensor& a, const nn::Tensor& b) {
    nn::require_same_shape(a, b, "image_mse");
    if (a.empty()) throw std::invalid_argument("image_mse of empty tensors");
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = 0.5L * (static_cast<long double>(a[i]) - static_cast<long double>(b[i]));
        s += d * d;
    }
    return s / static_cast<long double>(a.size());
}

}  // namespace

double image_mse(const nn::Tensor& a, const nn::Tensor& b) { return static_cast<double>(mse_extended(a, b)); }

double psnr(const nn::Tensor& a, const nn::Tensor& b) {
    const long double m = mse_extended(a, b);
    if (m == 0.0L) return kPsnrCap;
    return std::min(kPsnrCap, static_cast<double>(10.0L * std::log10(1.0L / m)));
}

double ssim(const nn::Tensor& a_in, const nn::Tensor& b_in) {
    nn::require_same_shape(a_in, b_in, "ssim");
    const nn::Tensor a = as_image(a_in), b = as_image(b_in);
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2), k = kSsimWindow;
    if (h < k || w < k) throw std::invalid_argument("ssim: image smaller than the 7x7 window");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const double count = static_cast<double>(k * k);

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* pa = a.data() + ch * h * w;
        const double* pb = b.data() + ch * h * w;
        for (std::size_t y = 0; y + k <= h; ++y) {
            for (std::size_t x = 0; x + k <= w; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t i = (y + dy) * w + x + dx;
                        const double u = unit(pa[i]), v = unit(pb[i]);
                        sa += u;
                        sb += v;
                        saa += u * u;
                        sbb += v * v;
                        sab += u * v;
                    }
                }
                const double ma = sa / count, mb = sb / count;
                const double va = saa / count - ma * ma, vb = sbb / count - mb * mb;
                const double cov = sab / count - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

FeatureSimilarity feature_similarity(const nn::Tensor& sub, const nn::Tensor& tgt) {
    nn::require_same_shape(sub, tgt, "feature_similarity");
    if (sub.batch() == 0) throw std::invalid_argument("feature_similarity of an empty batch");
    FeatureSimilarity out;
    double cos_sum = 0.0, sq = 0.0;
    std::size_t used = 0;
    for (std::size_t n = 0; n < sub.batch(); ++n) {
        const auto a = sub.row(n), b = tgt.row(n);
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        if (na == 0.0 || nb == 0.0) continue;
        cos_sum += dot / std::sqrt(na * nb);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("feature_similarity: every sample has zero norm");
    out.cosine = cos_sum / static_cast<double>(used);
    out.mse = sq / static_cast<double>(sub.size());
    return out;
}

std::vector<ImageScores> score_images(const nn::Tensor& truth, const nn::Tensor& recon) {
    nn::require_same_shape(truth, recon, "score_images");
    if (truth.rank() != 4) throw std::invalid_argument("score_images expects [N,C,H,W]");
    std::vector<ImageScores> out;
    for (std::size_t n = 0; n < truth.batch(); ++n) {
        const nn::Tensor a = truth.slice_batch(n, n + 1), b = recon.slice_batch(n, n + 1);
        out.push_back({psnr(a, b), ssim(a, b), image_mse(a, b)});
    }
    return out;
}

}  // namespace sll::metrics
