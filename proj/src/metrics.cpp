#include "bgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "bgrid/interp.hpp"

namespace bgrid {

namespace {

std::vector<std::size_t> spatial_strides(std::span<const std::size_t> shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t a = shape.size(); a-- > 1;) s[a - 1] = s[a] * shape[a];
    return s;
}

void check_same_shape(const LabelMask& a, const LabelMask& b) {
    if (a.shape != b.shape) throw std::invalid_argument("label masks have different shapes");
}

// Centers of foreground voxels that touch background through a face.
std::vector<std::vector<double>> boundary_voxels(const LabelMask& m, std::int32_t label) {
    const auto strides = spatial_strides(m.shape);
    const std::size_t rank = m.shape.size();
    std::vector<std::vector<double>> pts;
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < m.voxels(); ++i) {
        if (m.labels[i] == label) {
            bool boundary = false;
            for (std::size_t a = 0; a < rank && !boundary; ++a) {
                if (idx[a] == 0 || m.labels[i - strides[a]] != label) boundary = true;
                else if (idx[a] + 1 >= m.shape[a] || m.labels[i + strides[a]] != label)
                    boundary = true;
            }
            if (boundary) {
                std::vector<double> p(rank);
                for (std::size_t a = 0; a < rank; ++a) {
                    p[a] = static_cast<double>(idx[a]) * m.spacing[a];
                }
                pts.push_back(std::move(p));
            }
        }
        std::size_t a = rank;
        while (a-- > 0) {
            if (++idx[a] < m.shape[a]) break;
            idx[a] = 0;
        }
    }
    return pts;
}

double percentile_linear(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double rank = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

double directed_d95(const std::vector<std::vector<double>>& from,
                    const std::vector<std::vector<double>>& to) {
    std::vector<double> dists;
    dists.reserve(from.size());
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            double d2 = 0.0;
            for (std::size_t a = 0; a < p.size(); ++a) {
                const double d = p[a] - q[a];
                d2 += d * d;
            }
            best = std::min(best, d2);
        }
        dists.push_back(std::sqrt(best));
    }
    return percentile_linear(std::move(dists), 0.95);
}

}  // namespace

LabelMask::LabelMask(std::vector<std::int32_t> l, std::vector<std::size_t> s,
                     std::vector<double> sp)
    : labels(std::move(l)), shape(std::move(s)), spacing(std::move(sp)) {
    if (labels.size() != Tensor::numel(shape)) {
        throw std::invalid_argument("label count does not match shape");
    }
    for (std::int32_t v : labels) {
        if (v < 0) throw std::invalid_argument("labels must be nonnegative");
    }
    if (spacing.empty()) spacing.assign(shape.size(), 1.0);
    if (spacing.size() != shape.size()) {
        throw std::invalid_argument("spacing rank does not match mask shape");
    }
}

LabelMask LabelMask::from_image(const Image& image) {
    if (image.channels() != 1) {
        throw std::invalid_argument("label masks must be single-channel");
    }
    const double scale = image.value_range[1] - image.value_range[0];
    const double offset = image.value_range[0];
    std::vector<std::int32_t> labels(image.voxels());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] =
            static_cast<std::int32_t>(std::lround(image.tensor[i] * scale + offset));
    }
    return LabelMask(std::move(labels), image.spatial_shape(), image.spacing);
}

std::vector<std::int32_t> LabelMask::present_labels() const {
    std::set<std::int32_t> s;
    for (std::int32_t v : labels) {
        if (v > 0) s.insert(v);
    }
    return {s.begin(), s.end()};
}

DiceResult dice(const LabelMask& a, const LabelMask& b,
                const std::vector<std::int32_t>& labels) {
    check_same_shape(a, b);
    std::vector<std::int32_t> use = labels;
    if (use.empty()) {
        auto la = a.present_labels();
        auto lb = b.present_labels();
        std::set<std::int32_t> s(la.begin(), la.end());
        s.insert(lb.begin(), lb.end());
        use.assign(s.begin(), s.end());
    }
    DiceResult res;
    double sum = 0.0;
    for (std::int32_t label : use) {
        std::size_t na = 0, nb = 0, ninter = 0;
        for (std::size_t i = 0; i < a.voxels(); ++i) {
            const bool ia = a.labels[i] == label;
            const bool ib = b.labels[i] == label;
            na += ia;
            nb += ib;
            ninter += ia && ib;
        }
        const double d = (na + nb) == 0
                             ? 1.0
                             : 2.0 * static_cast<double>(ninter) /
                                   static_cast<double>(na + nb);
        res.per_label[label] = d;
        sum += d;
    }
    res.mean = use.empty() ? 0.0 : sum / static_cast<double>(use.size());
    return res;
}

double hd95(const LabelMask& a, const LabelMask& b, std::int32_t label) {
    check_same_shape(a, b);
    const auto pa = boundary_voxels(a, label);
    const auto pb = boundary_voxels(b, label);
    if (pa.empty() || pb.empty()) {
        throw std::invalid_argument("hd95 label absent in one of the masks");
    }
    return std::max(directed_d95(pa, pb), directed_d95(pb, pa));
}

SdLogJResult sdlogj(const DisplacementField& u, const LabelMask* mask) {
    const Tensor det = jacobian_determinant(u);
    const auto shape = u.spatial_shape();
    const std::size_t rank = shape.size();

    if (mask && mask->shape != shape) {
        throw std::invalid_argument("mask shape does not match field");
    }

    SdLogJResult res;
    std::vector<double> logs;
    logs.reserve(det.size());
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < det.size(); ++i) {
        bool use;
        if (mask) {
            use = mask->labels[i] > 0;
        } else {
            use = true;
            for (std::size_t a = 0; a < rank; ++a) {
                if (idx[a] == 0 || idx[a] + 1 >= shape[a]) {
                    use = false;
                    break;
                }
            }
        }
        if (use) {
            if (det[i] <= 0.0) ++res.folds;
            logs.push_back(std::log(std::max(det[i], 1e-9)));
        }
        std::size_t a = rank;
        while (a-- > 0) {
            if (++idx[a] < shape[a]) break;
            idx[a] = 0;
        }
    }
    if (logs.empty()) return res;
    double mean = 0.0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (double v : logs) var += (v - mean) * (v - mean);
    res.sdlogj = std::sqrt(var / static_cast<double>(logs.size()));
    return res;
}

TreResult tre(const DisplacementField& u, const KeypointSet& kps) {
    const auto shape = u.spatial_shape();
    kps.validate_extent(shape);
    const auto strides = spatial_strides(shape);
    const std::size_t rank = u.spatial_rank();
    const std::size_t voxels = u.voxels();

    TreResult res;
    res.per_landmark_mm.reserve(kps.count());
    for (std::size_t i = 0; i < kps.count(); ++i) {
        const auto pf = kps.fixed_point(i);
        const auto pm = kps.moving_point(i);
        double err2 = 0.0;
        for (std::size_t a = 0; a < rank; ++a) {
            const double ua =
                multilinear_sample(u.vectors.data() + a * voxels, shape, strides, pf);
            const double d = (pf[a] + ua - pm[a]) * u.spacing[a];
            err2 += d * d;
        }
        res.per_landmark_mm.push_back(std::sqrt(err2));
    }
    double sum = 0.0;
    for (double v : res.per_landmark_mm) sum += v;
    res.mean_mm = res.per_landmark_mm.empty()
                      ? 0.0
                      : sum / static_cast<double>(res.per_landmark_mm.size());
    return res;
}

double mse(const Image& a, const Image& b) {
    if (!a.tensor.same_shape(b.tensor)) {
        throw std::invalid_argument("images have different shapes");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.tensor.size(); ++i) {
        const double d = a.tensor[i] - b.tensor[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.tensor.size());
}

double smoothness(const DisplacementField& u) {
    const auto shape = u.spatial_shape();
    const auto strides = spatial_strides(shape);
    const std::size_t rank = u.spatial_rank();
    const std::size_t voxels = u.voxels();

    double acc = 0.0;
    std::size_t terms = 0;
    for (std::size_t c = 0; c < rank; ++c) {
        const double* comp = u.vectors.data() + c * voxels;
        std::vector<std::size_t> idx(rank, 0);
        for (std::size_t i = 0; i < voxels; ++i) {
            for (std::size_t a = 0; a < rank; ++a) {
                if (idx[a] + 1 < shape[a]) {
                    const double d = comp[i + strides[a]] - comp[i];
                    acc += d * d;
                    ++terms;
                }
            }
            std::size_t a = rank;
            while (a-- > 0) {
                if (++idx[a] < shape[a]) break;
                idx[a] = 0;
            }
        }
    }
    return terms == 0 ? 0.0 : acc / static_cast<double>(terms);
}

}  // namespace bgrid
