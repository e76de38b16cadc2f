#pragma once
// 2D connected-component labeling, the generated-vs-GT matching taxonomy
// (matching / missing / false positive / merged / split), component-area
// histograms and the Wasserstein distance between them.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// LabelMap
// ---------------------------------------------------------------------------

struct ComponentInfo {
    int id = 0;
    int area = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounding box
    std::size_t pixel_offset = 0;        // into LabelMap::pixel_indices
};

struct LabelMap {
    int width = 0, height = 0;
    std::vector<std::int32_t> labels;        // 0 = background, components 1..K
    std::vector<ComponentInfo> components;   // dense ids, raster order of first pixel
    std::vector<std::uint32_t> pixel_indices; // pixels grouped per component

    [[nodiscard]] int label_at(int x, int y) const {
        return labels[std::size_t(y) * width + x];
    }
    [[nodiscard]] std::size_t count() const { return components.size(); }
};

/// Standard connected labeling with deterministic ids assigned by raster
/// order of each component's first pixel.
inline LabelMap label_components(const Binary2D& mask, int connectivity = 8) {
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("label_components: connectivity must be 4 or 8");
    LabelMap lm;
    lm.width = mask.width;
    lm.height = mask.height;
    lm.labels.assign(mask.size(), 0);

    static const int off8[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                   {1, 0},   {-1, 1}, {0, 1},  {1, 1}};
    static const int off4[4][2] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
    const auto* offs = connectivity == 8 ? &off8[0] : &off4[0];
    const int n_off = connectivity;

    std::vector<std::uint32_t> stack;
    int next_id = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const std::size_t i = std::size_t(y) * mask.width + x;
            if (!mask.bits[i] || lm.labels[i] != 0) continue;
            ++next_id;
            ComponentInfo info;
            info.id = next_id;
            info.x0 = info.x1 = x;
            info.y0 = info.y1 = y;
            info.pixel_offset = lm.pixel_indices.size();
            lm.labels[i] = next_id;
            stack.push_back(std::uint32_t(i));
            while (!stack.empty()) {
                const std::uint32_t cur = stack.back();
                stack.pop_back();
                lm.pixel_indices.push_back(cur);
                ++info.area;
                const int cy = int(cur) / mask.width;
                const int cx = int(cur) % mask.width;
                info.x0 = std::min(info.x0, cx);
                info.x1 = std::max(info.x1, cx);
                info.y0 = std::min(info.y0, cy);
                info.y1 = std::max(info.y1, cy);
                for (int k = 0; k < n_off; ++k) {
                    const int nx2 = cx + offs[k][0], ny2 = cy + offs[k][1];
                    if (nx2 < 0 || nx2 >= mask.width || ny2 < 0 || ny2 >= mask.height) continue;
                    const std::size_t ni = std::size_t(ny2) * mask.width + nx2;
                    if (mask.bits[ni] && lm.labels[ni] == 0) {
                        lm.labels[ni] = next_id;
                        stack.push_back(std::uint32_t(ni));
                    }
                }
            }
            lm.components.push_back(info);
        }
    return lm;
}

/// Removes components with area < min_area (pixels become background) and
/// re-densifies the ids. Idempotent.
inline LabelMap filter_small(const LabelMap& lm, int min_area = 16) {
    if (min_area < 0) throw std::invalid_argument("filter_small: min_area must be >= 0");
    LabelMap out;
    out.width = lm.width;
    out.height = lm.height;
    out.labels.assign(lm.labels.size(), 0);
    int next_id = 0;
    for (const auto& c : lm.components) {
        if (c.area < min_area) continue;
        ++next_id;
        ComponentInfo info = c;
        info.id = next_id;
        info.pixel_offset = out.pixel_indices.size();
        for (int k = 0; k < c.area; ++k) {
            const std::uint32_t px = lm.pixel_indices[c.pixel_offset + std::size_t(k)];
            out.labels[px] = next_id;
            out.pixel_indices.push_back(px);
        }
        out.components.push_back(info);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matching taxonomy
// ---------------------------------------------------------------------------

struct CcTaxonomy {
    int matching = 0;         // one-to-one pairs, merged/split cases excluded
    int missing = 0;          // GT components with no overlap in generated
    int false_positives = 0;  // generated components with no overlap in GT
    int merged = 0;           // generated components overlapping >= 2 GT
    int split = 0;            // GT components overlapping >= 2 generated
    int gt_total = 0;
    int gen_total = 0;

    std::vector<std::pair<int, int>> matching_pairs;  // (gen id, gt id)
    std::vector<int> missing_ids, false_positive_ids, merged_ids, split_ids;

    [[nodiscard]] double matching_pct() const {
        return gt_total ? 100.0 * matching / gt_total : 0.0;
    }
    [[nodiscard]] double missing_pct() const {
        return gt_total ? 100.0 * missing / gt_total : 0.0;
    }
};

/// Classifies every component of both maps from their pixel overlaps
/// (one shared pixel counts, configurable). Merge and split cases are judged
/// per side, so a component can participate in both a merge and a split;
/// matching demands strict one-to-one overlap.
inline CcTaxonomy classify_components(const LabelMap& gen, const LabelMap& gt,
                                      int min_overlap_px = 1) {
    if (gen.width != gt.width || gen.height != gt.height)
        throw std::invalid_argument("classify_components: dims mismatch");

    // sparse contingency counts over co-foreground pixels
    std::map<std::pair<int, int>, int> table;
    for (std::size_t i = 0; i < gen.labels.size(); ++i) {
        const int g = gen.labels[i], t = gt.labels[i];
        if (g > 0 && t > 0) ++table[{g, t}];
    }
    std::vector<std::set<int>> gen_hits(gen.count() + 1), gt_hits(gt.count() + 1);
    for (const auto& [key, n] : table) {
        if (n < min_overlap_px) continue;
        gen_hits[std::size_t(key.first)].insert(key.second);
        gt_hits[std::size_t(key.second)].insert(key.first);
    }

    CcTaxonomy tax;
    tax.gen_total = int(gen.count());
    tax.gt_total = int(gt.count());
    for (int g = 1; g <= tax.gen_total; ++g) {
        const auto& hits = gen_hits[std::size_t(g)];
        if (hits.empty()) {
            ++tax.false_positives;
            tax.false_positive_ids.push_back(g);
        } else if (hits.size() >= 2) {
            ++tax.merged;
            tax.merged_ids.push_back(g);
        }
    }
    for (int t = 1; t <= tax.gt_total; ++t) {
        const auto& hits = gt_hits[std::size_t(t)];
        if (hits.empty()) {
            ++tax.missing;
            tax.missing_ids.push_back(t);
        } else if (hits.size() >= 2) {
            ++tax.split;
            tax.split_ids.push_back(t);
        }
    }
    for (int g = 1; g <= tax.gen_total; ++g) {
        const auto& hits = gen_hits[std::size_t(g)];
        if (hits.size() != 1) continue;
        const int t = *hits.begin();
        if (gt_hits[std::size_t(t)].size() == 1) {
            ++tax.matching;
            tax.matching_pairs.emplace_back(g, t);
        }
    }
    return tax;
}

// ---------------------------------------------------------------------------
// Area histograms and Wasserstein distance
// ---------------------------------------------------------------------------

struct AreaHistogram {
    double bin_width = 100.0;
    std::vector<double> counts;      // bins [0,w), [w,2w), ...
    std::vector<double> normalized;  // sums to 1 (empty when no mass)
};

inline AreaHistogram area_histogram(const LabelMap& lm, double bin_width = 100.0) {
    if (bin_width <= 0.0) throw std::invalid_argument("area_histogram: bin_width must be > 0");
    AreaHistogram h;
    h.bin_width = bin_width;
    for (const auto& c : lm.components) {
        const auto b = std::size_t(double(c.area) / bin_width);
        if (h.counts.size() <= b) h.counts.resize(b + 1, 0.0);
        h.counts[b] += 1.0;
    }
    double total = 0.0;
    for (double v : h.counts) total += v;
    if (total > 0.0) {
        h.normalized.resize(h.counts.size());
        for (std::size_t i = 0; i < h.counts.size(); ++i) h.normalized[i] = h.counts[i] / total;
    }
    return h;
}

/// W1 between two histograms sharing a bin width: the L1 distance of the
/// normalized CDFs, scaled by the bin width.
inline double wasserstein_1d(const AreaHistogram& h1, const AreaHistogram& h2) {
    if (h1.bin_width != h2.bin_width)
        throw std::invalid_argument("wasserstein_1d: bin widths differ");
    double m1 = 0.0, m2 = 0.0;
    for (double v : h1.counts) m1 += v;
    for (double v : h2.counts) m2 += v;
    if (m1 <= 0.0 || m2 <= 0.0) throw std::invalid_argument("wasserstein_1d: zero-mass input");

    const std::size_t n = std::max(h1.counts.size(), h2.counts.size());
    double c1 = 0.0, c2 = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        c1 += i < h1.counts.size() ? h1.counts[i] / m1 : 0.0;
        c2 += i < h2.counts.size() ? h2.counts[i] / m2 : 0.0;
        acc += std::fabs(c1 - c2);
    }
    return acc * h1.bin_width;
}

}  // namespace poro
