#pragma once
// Skeleton-to-graph extraction, tubule/branch edge classification and the
// derived network metrics. Nodes are junction or end clusters of the
// skeleton; edges are the centerline chains between them.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "skeleton.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// PorosityGraph
// ---------------------------------------------------------------------------

enum class EdgeClass { unclassified, tubule, branch };

inline const char* edge_class_name(EdgeClass c) {
    switch (c) {
        case EdgeClass::tubule: return "tubule";
        case EdgeClass::branch: return "branch";
        case EdgeClass::unclassified: return "unclassified";
    }
    return "";
}

struct GraphNode {
    int id = 0;
    double x = 0, y = 0, z = 0;  // cluster centroid, voxel coordinates
    int degree = 0;              // incident edge endpoints (self-loops count twice)
};

struct GraphEdge {
    int id = 0;
    int n0 = 0, n1 = 0;
    std::vector<std::array<int, 3>> polyline;  // skeleton voxels, node to node
    double length_um = 0.0;
    double mean_diameter_um = 0.0;
    double max_diameter_um = 0.0;
    EdgeClass cls = EdgeClass::unclassified;
    bool self_loop = false;

    [[nodiscard]] int steps() const { return int(polyline.size()) - 1; }
};

struct PorosityGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    double sx = 100.0, sy = 100.0, sz = 100.0;  // nm
};

// ---------------------------------------------------------------------------
// extract_graph
// ---------------------------------------------------------------------------

namespace detail {

inline double step_length_nm(const std::array<int, 3>& a, const std::array<int, 3>& b,
                             double sx, double sy, double sz) {
    const double dx = (a[0] - b[0]) * sx;
    const double dy = (a[1] - b[1]) * sy;
    const double dz = (a[2] - b[2]) * sz;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct SkelIndex {
    const BinaryVolume* vol = nullptr;
    std::vector<std::uint32_t> voxels;          // raster-sorted skeleton voxels
    std::vector<std::int32_t> voxel_slot;       // per volume index, -1 off-skeleton
    std::vector<std::uint8_t> neighbor_count;   // 26-neighbour count per slot

    [[nodiscard]] std::array<int, 3> coords(std::uint32_t idx) const {
        const std::size_t plane = std::size_t(vol->nx) * vol->ny;
        return {int(idx % std::size_t(vol->nx)), int((idx % plane) / std::size_t(vol->nx)),
                int(idx / plane)};
    }
};

inline SkelIndex build_index(const BinaryVolume& skel) {
    SkelIndex si;
    si.vol = &skel;
    si.voxel_slot.assign(skel.size(), -1);
    for (std::size_t i = 0; i < skel.size(); ++i)
        if (skel.bits[i]) {
            si.voxel_slot[i] = std::int32_t(si.voxels.size());
            si.voxels.push_back(std::uint32_t(i));
        }
    si.neighbor_count.assign(si.voxels.size(), 0);
    for (std::size_t s = 0; s < si.voxels.size(); ++s) {
        const auto [x, y, z] = si.coords(si.voxels[s]);
        int c = 0;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy && !dz) continue;
                    const int xx = x + dx, yy = y + dy, zz = z + dz;
                    if (skel.in_bounds(xx, yy, zz) && skel.get(xx, yy, zz)) ++c;
                }
        si.neighbor_count[s] = std::uint8_t(c);
    }
    return si;
}

template <class F>
void for_each_neighbor(const SkelIndex& si, std::uint32_t idx, F&& fn) {
    const auto [x, y, z] = si.coords(idx);
    const auto& v = *si.vol;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (!dx && !dy && !dz) continue;
                const int xx = x + dx, yy = y + dy, zz = z + dz;
                if (v.in_bounds(xx, yy, zz) && v.get(xx, yy, zz))
                    fn(std::uint32_t(v.index(xx, yy, zz)));
            }
}

}  // namespace detail

/// Builds the network from a thinned skeleton. Skeleton voxels with a
/// neighbour count other than two are node voxels; 26-adjacent node voxels
/// merge into one node (centroid position). Edges are the maximal two-
/// neighbour chains between node clusters; a junction-free closed loop gets
/// an anchor node at its lowest raster voxel and becomes a self-loop edge.
/// Lengths use the anisotropy-aware Euclidean step; per-edge diameters are
/// sampled from the diameter map along the chain.
inline PorosityGraph extract_graph(const BinaryVolume& skel, const ImageStack& diameter_map,
                                   double spacing_nm_x = 0.0) {
    if (diameter_map.nx != skel.nx || diameter_map.ny != skel.ny || diameter_map.nz != skel.nz)
        throw std::invalid_argument("extract_graph: diameter map dims mismatch");
    const double sx = skel.sx, sy = skel.sy, sz = skel.sz;
    const double voxel_nm = spacing_nm_x > 0.0 ? spacing_nm_x : sx;

    PorosityGraph g;
    g.sx = sx;
    g.sy = sy;
    g.sz = sz;
    const auto si = detail::build_index(skel);
    if (si.voxels.empty()) return g;

    // cluster node voxels (neighbour count != 2) by 26-connectivity
    std::vector<std::int32_t> cluster_of(si.voxels.size(), -1);
    std::vector<std::uint32_t> stack;
    int n_clusters = 0;
    for (std::size_t s = 0; s < si.voxels.size(); ++s) {
        if (si.neighbor_count[s] == 2 || cluster_of[s] >= 0) continue;
        const int cid = n_clusters++;
        cluster_of[s] = cid;
        stack.push_back(si.voxels[s]);
        double cx = 0, cy = 0, cz = 0;
        int cn = 0;
        while (!stack.empty()) {
            const std::uint32_t cur = stack.back();
            stack.pop_back();
            const auto [x, y, z] = si.coords(cur);
            cx += x; cy += y; cz += z;
            ++cn;
            detail::for_each_neighbor(si, cur, [&](std::uint32_t nb) {
                const auto slot = std::size_t(si.voxel_slot[nb]);
                if (si.neighbor_count[slot] != 2 && cluster_of[slot] < 0) {
                    cluster_of[slot] = cid;
                    stack.push_back(nb);
                }
            });
        }
        GraphNode node;
        node.id = cid;
        node.x = cx / cn;
        node.y = cy / cn;
        node.z = cz / cn;
        g.nodes.push_back(node);
    }

    auto diameter_um = [&](const std::array<int, 3>& p) {
        return double(diameter_map.at(p[0], p[1], p[2])) * voxel_nm / 1000.0;
    };

    std::vector<std::uint8_t> chain_visited(si.voxels.size(), 0);
    auto finish_edge = [&](std::vector<std::array<int, 3>>&& poly, int c0, int c1,
                           bool self_loop) {
        GraphEdge e;
        e.id = int(g.edges.size());
        e.n0 = c0;
        e.n1 = c1;
        e.self_loop = self_loop;
        e.polyline = std::move(poly);
        double len = 0.0, dsum = 0.0, dmax = 0.0;
        for (std::size_t i = 0; i < e.polyline.size(); ++i) {
            if (i) len += detail::step_length_nm(e.polyline[i - 1], e.polyline[i], sx, sy, sz);
            const double d = diameter_um(e.polyline[i]);
            dsum += d;
            dmax = std::max(dmax, d);
        }
        e.length_um = len / 1000.0;
        e.mean_diameter_um = e.polyline.empty() ? 0.0 : dsum / double(e.polyline.size());
        e.max_diameter_um = dmax;
        g.nodes[std::size_t(c0)].degree += 1;
        g.nodes[std::size_t(c1)].degree += 1;
        g.edges.push_back(std::move(e));
    };

    // chains anchored at node clusters
    for (std::size_t s = 0; s < si.voxels.size(); ++s) {
        if (cluster_of[s] < 0) continue;
        const std::uint32_t start = si.voxels[s];
        detail::for_each_neighbor(si, start, [&](std::uint32_t nb) {
            const auto nb_slot = std::size_t(si.voxel_slot[nb]);
            // adjacent node voxels always share a cluster (26-connected merge),
            // so only two-neighbour chain voxels start an edge walk
            if (cluster_of[nb_slot] >= 0) return;
            if (chain_visited[nb_slot]) return;
            std::vector<std::array<int, 3>> poly{si.coords(start)};
            std::uint32_t prev = start, cur = nb;
            while (true) {
                const auto cur_slot = std::size_t(si.voxel_slot[cur]);
                if (cluster_of[cur_slot] >= 0) {
                    poly.push_back(si.coords(cur));
                    const int c0 = cluster_of[s], c1 = cluster_of[cur_slot];
                    finish_edge(std::move(poly), c0, c1, c0 == c1);
                    break;
                }
                chain_visited[cur_slot] = 1;
                poly.push_back(si.coords(cur));
                std::uint32_t next = cur;
                detail::for_each_neighbor(si, cur, [&](std::uint32_t nn) {
                    if (nn != prev) next = nn;
                });
                if (next == cur) {  // dead end without a node voxel (cannot happen
                    finish_edge(std::move(poly), cluster_of[s], cluster_of[s], false);
                    break;
                }
                prev = cur;
                cur = next;
            }
        });
    }

    // junction-free cycles: everything still unvisited has neighbour count 2
    for (std::size_t s = 0; s < si.voxels.size(); ++s) {
        if (cluster_of[s] >= 0 || chain_visited[s]) continue;
        const std::uint32_t anchor = si.voxels[s];
        GraphNode node;
        node.id = int(g.nodes.size());
        const auto [ax, ay, az] = si.coords(anchor);
        node.x = ax; node.y = ay; node.z = az;
        g.nodes.push_back(node);
        chain_visited[s] = 1;

        std::vector<std::array<int, 3>> poly{si.coords(anchor)};
        std::uint32_t first = anchor;  // smallest-index neighbour starts the walk
        detail::for_each_neighbor(si, anchor, [&](std::uint32_t nn) {
            if (first == anchor || nn < first) first = nn;
        });
        std::uint32_t prev = anchor, cur = first;
        while (cur != anchor) {
            const auto cur_slot = std::size_t(si.voxel_slot[cur]);
            chain_visited[cur_slot] = 1;
            poly.push_back(si.coords(cur));
            std::uint32_t next = cur;
            detail::for_each_neighbor(si, cur, [&](std::uint32_t nn) {
                if (nn != prev) next = nn;
            });
            prev = cur;
            cur = next;
        }
        poly.push_back(si.coords(anchor));
        finish_edge(std::move(poly), node.id, node.id, true);
    }
    return g;
}

// ---------------------------------------------------------------------------
// prune_spurs
// ---------------------------------------------------------------------------

/// Removes thinning artifacts shorter than `min_steps` voxel steps: whisker
/// edges ending in a degree-1 node attached to a junction, short self-loops,
/// and short junction-to-junction edges (split junction clusters), which are
/// contracted into a single node. Junction nodes left with degree 2 are
/// merged away by joining their two surviving chains.
inline PorosityGraph prune_spurs(const PorosityGraph& in, int min_steps = 2) {
    PorosityGraph g = in;

    auto recount = [](PorosityGraph& gr) {
        for (auto& n : gr.nodes) n.degree = 0;
        for (const auto& e : gr.edges) {
            gr.nodes[std::size_t(e.n0)].degree += 1;
            gr.nodes[std::size_t(e.n1)].degree += 1;
        }
    };
    recount(g);

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < g.edges.size(); ++i) {
            const auto& e = g.edges[i];
            if (e.steps() >= min_steps) continue;
            const int d0 = g.nodes[std::size_t(e.n0)].degree;
            const int d1 = g.nodes[std::size_t(e.n1)].degree;
            if (e.n0 == e.n1) {
                // short self-loop artifact
                g.edges.erase(g.edges.begin() + std::ptrdiff_t(i));
                recount(g);
                changed = true;
                break;
            }
            if ((d0 == 1 && d1 >= 3) || (d1 == 1 && d0 >= 3)) {
                // junction whisker
                g.edges.erase(g.edges.begin() + std::ptrdiff_t(i));
                recount(g);
                changed = true;
                break;
            }
            if (d0 >= 3 && d1 >= 3) {
                // split junction cluster: contract into the smaller node id
                const int keep = std::min(e.n0, e.n1);
                const int gone = std::max(e.n0, e.n1);
                auto& nk = g.nodes[std::size_t(keep)];
                const auto& ng = g.nodes[std::size_t(gone)];
                nk.x = 0.5 * (nk.x + ng.x);
                nk.y = 0.5 * (nk.y + ng.y);
                nk.z = 0.5 * (nk.z + ng.z);
                g.edges.erase(g.edges.begin() + std::ptrdiff_t(i));
                for (auto& e2 : g.edges) {
                    if (e2.n0 == gone) e2.n0 = keep;
                    if (e2.n1 == gone) e2.n1 = keep;
                    e2.self_loop = e2.n0 == e2.n1;
                }
                recount(g);
                changed = true;
                break;
            }
        }
    }

    PorosityGraph out;
    out.sx = g.sx; out.sy = g.sy; out.sz = g.sz;
    out.nodes = g.nodes;
    for (auto& n : out.nodes) n.degree = 0;
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        GraphEdge e = g.edges[i];
        e.id = int(out.edges.size());
        out.nodes[std::size_t(e.n0)].degree += 1;
        out.nodes[std::size_t(e.n1)].degree += 1;
        out.edges.push_back(std::move(e));
    }

    // join chains through nodes reduced to plain pass-throughs
    changed = true;
    while (changed) {
        changed = false;
        for (const auto& n : out.nodes) {
            if (n.degree != 2) continue;
            std::vector<std::size_t> inc;
            for (std::size_t i = 0; i < out.edges.size(); ++i)
                if (out.edges[i].n0 == n.id || out.edges[i].n1 == n.id) inc.push_back(i);
            if (inc.size() != 2) continue;  // a self-loop already accounts for both endpoints
            GraphEdge& a = out.edges[inc[0]];
            GraphEdge& b = out.edges[inc[1]];
            if (a.self_loop || b.self_loop) continue;

            auto oriented = [&](const GraphEdge& e, bool from_n) {
                std::vector<std::array<int, 3>> p = e.polyline;
                const bool starts_at_n = e.n0 == n.id;
                if (from_n != starts_at_n) std::reverse(p.begin(), p.end());
                return p;
            };
            const int other_a = a.n0 == n.id ? a.n1 : a.n0;
            const int other_b = b.n0 == n.id ? b.n1 : b.n0;
            std::vector<std::array<int, 3>> poly = oriented(a, false);
            auto tail = oriented(b, true);
            // chains may attach at different voxels of a merged node cluster
            const bool shared = !poly.empty() && !tail.empty() && poly.back() == tail.front();
            poly.insert(poly.end(), tail.begin() + (shared ? 1 : 0), tail.end());

            GraphEdge merged;
            merged.n0 = other_a;
            merged.n1 = other_b;
            merged.self_loop = other_a == other_b;
            merged.polyline = std::move(poly);
            merged.length_um = a.length_um + b.length_um;
            const double wa = double(a.polyline.size()), wb = double(b.polyline.size());
            merged.mean_diameter_um =
                (a.mean_diameter_um * wa + b.mean_diameter_um * wb) / std::max(1.0, wa + wb);
            merged.max_diameter_um = std::max(a.max_diameter_um, b.max_diameter_um);
            merged.cls = a.cls;

            std::vector<GraphEdge> rebuilt;
            for (std::size_t i = 0; i < out.edges.size(); ++i)
                if (i != inc[0] && i != inc[1]) rebuilt.push_back(out.edges[i]);
            rebuilt.push_back(std::move(merged));
            out.edges = std::move(rebuilt);
            for (auto& nd : out.nodes) nd.degree = 0;
            for (auto& e : out.edges) {
                e.id = 0;  // re-assigned below
                out.nodes[std::size_t(e.n0)].degree += 1;
                out.nodes[std::size_t(e.n1)].degree += 1;
            }
            changed = true;
            break;
        }
    }
    for (std::size_t i = 0; i < out.edges.size(); ++i) out.edges[i].id = int(i);
    return out;
}

// ---------------------------------------------------------------------------
// classify_edges
// ---------------------------------------------------------------------------

struct EdgeClassifierParams {
    double tubule_min_diameter_um = 1.0;
    std::optional<std::array<double, 3>> direction_axis;  // optional alignment test
    double max_angle_deg = 45.0;
};

/// Labels each edge tubule or branch from its mean diameter, optionally also
/// requiring alignment with a dominant axis.
inline PorosityGraph classify_edges(const PorosityGraph& in, const EdgeClassifierParams& p) {
    PorosityGraph g = in;
    for (auto& e : g.edges) {
        bool tubule = e.mean_diameter_um >= p.tubule_min_diameter_um;
        if (tubule && p.direction_axis && e.polyline.size() >= 2) {
            const auto& a = e.polyline.front();
            const auto& b = e.polyline.back();
            const double vx = (b[0] - a[0]) * g.sx, vy = (b[1] - a[1]) * g.sy,
                         vz = (b[2] - a[2]) * g.sz;
            const auto& ax = *p.direction_axis;
            const double dot = vx * ax[0] + vy * ax[1] + vz * ax[2];
            const double nv = std::sqrt(vx * vx + vy * vy + vz * vz);
            const double na = std::sqrt(ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]);
            if (nv > 0 && na > 0) {
                const double cosang = std::clamp(std::fabs(dot) / (nv * na), 0.0, 1.0);
                const double ang = std::acos(cosang) * 180.0 / 3.14159265358979323846;
                if (ang > p.max_angle_deg) tubule = false;
            }
        }
        e.cls = tubule ? EdgeClass::tubule : EdgeClass::branch;
    }
    return g;
}

// ---------------------------------------------------------------------------
// graph_metrics / metric_ratios
// ---------------------------------------------------------------------------

struct GraphMetrics {
    int n_edges_all = 0, n_edges_tubule = 0, n_edges_branch = 0;
    int n_nodes_degree1 = 0, n_nodes_degree3 = 0, n_nodes_degree4 = 0, n_nodes_degree5 = 0;
    int n_nodes_degree_other = 0;
    double total_length_all_um = 0.0, total_length_tubule_um = 0.0,
           total_length_branch_um = 0.0;
};

inline GraphMetrics graph_metrics(const PorosityGraph& g) {
    GraphMetrics m;
    for (const auto& e : g.edges) {
        ++m.n_edges_all;
        m.total_length_all_um += e.length_um;
        if (e.cls == EdgeClass::tubule) {
            ++m.n_edges_tubule;
            m.total_length_tubule_um += e.length_um;
        } else if (e.cls == EdgeClass::branch) {
            ++m.n_edges_branch;
            m.total_length_branch_um += e.length_um;
        }
    }
    for (const auto& n : g.nodes) {
        switch (n.degree) {
            case 1: ++m.n_nodes_degree1; break;
            case 3: ++m.n_nodes_degree3; break;
            case 4: ++m.n_nodes_degree4; break;
            case 5: ++m.n_nodes_degree5; break;
            default: ++m.n_nodes_degree_other; break;
        }
    }
    return m;
}

/// Per-field generated/GT ratios; fields with a zero GT value come back
/// unset rather than infinite.
inline std::vector<std::pair<std::string, std::optional<double>>> metric_ratios(
    const GraphMetrics& gen, const GraphMetrics& gt) {
    auto ratio = [](double a, double b) -> std::optional<double> {
        if (b == 0.0) return std::nullopt;
        return a / b;
    };
    return {
        {"n_edges_all", ratio(gen.n_edges_all, gt.n_edges_all)},
        {"n_edges_tubule", ratio(gen.n_edges_tubule, gt.n_edges_tubule)},
        {"n_edges_branch", ratio(gen.n_edges_branch, gt.n_edges_branch)},
        {"n_nodes_degree1", ratio(gen.n_nodes_degree1, gt.n_nodes_degree1)},
        {"n_nodes_degree3", ratio(gen.n_nodes_degree3, gt.n_nodes_degree3)},
        {"n_nodes_degree4", ratio(gen.n_nodes_degree4, gt.n_nodes_degree4)},
        {"n_nodes_degree5", ratio(gen.n_nodes_degree5, gt.n_nodes_degree5)},
        {"total_length_all_um", ratio(gen.total_length_all_um, gt.total_length_all_um)},
        {"total_length_tubule_um", ratio(gen.total_length_tubule_um, gt.total_length_tubule_um)},
        {"total_length_branch_um", ratio(gen.total_length_branch_um, gt.total_length_branch_um)},
    };
}

}  // namespace poro
