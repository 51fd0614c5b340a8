#include "otseries/hierarchy.hpp"

#include "otseries/csv.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace otseries {

Dendrogram ward_linkage(const DistanceMatrix& d) {
    d.validate();
    const int k = int(d.size());
    if (k < 2) throw ArgumentError("ward_linkage: need at least 2 items");

    // active nodes carry (node id, cluster size); D2 holds squared
    // dissimilarities between active nodes, indexed by slot
    struct Active {
        int node;
        int size;
        int min_leaf; // smallest original leaf index, for tie-breaking
    };
    std::vector<Active> act(k);
    for (int i = 0; i < k; ++i) act[i] = {i, 1, i};

    std::vector<std::vector<double>> d2(k, std::vector<double>(k));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            d2[i][j] = d.at(std::size_t(i), std::size_t(j)) *
                       d.at(std::size_t(i), std::size_t(j));

    Dendrogram dend;
    dend.leaf_ids = d.ids;
    dend.merges.reserve(k - 1);

    int next_node = k;
    std::vector<int> slots(k);
    for (int i = 0; i < k; ++i) slots[i] = i;

    while (int(slots.size()) > 1) {
        // pick minimal D2 pair; ties by (min leaf, max-of-min-leaves)
        int bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < slots.size(); ++a)
            for (std::size_t b = a + 1; b < slots.size(); ++b) {
                const int sa = slots[a], sb = slots[b];
                const double v = d2[sa][sb];
                if (v < best) {
                    best = v;
                    bi = sa;
                    bj = sb;
                } else if (v == best && bi >= 0) {
                    const int lo_n = std::min(act[sa].min_leaf, act[sb].min_leaf);
                    const int hi_n = std::max(act[sa].min_leaf, act[sb].min_leaf);
                    const int lo_b = std::min(act[bi].min_leaf, act[bj].min_leaf);
                    const int hi_b = std::max(act[bi].min_leaf, act[bj].min_leaf);
                    if (lo_n < lo_b || (lo_n == lo_b && hi_n < hi_b)) {
                        bi = sa;
                        bj = sb;
                    }
                }
            }

        const int ni = act[bi].size, nj = act[bj].size;
        // left child is the node containing the smaller leaf id
        int left = act[bi].node, right = act[bj].node;
        if (act[bj].min_leaf < act[bi].min_leaf) std::swap(left, right);
        dend.merges.push_back({left, right, std::sqrt(best), ni + nj});

        // Lance-Williams Ward update into slot bi
        for (int s : slots) {
            if (s == bi || s == bj) continue;
            const int nk = act[s].size;
            const double upd = ((ni + nk) * d2[bi][s] + (nj + nk) * d2[bj][s] -
                                nk * best) /
                               double(ni + nj + nk);
            d2[bi][s] = d2[s][bi] = upd;
        }
        act[bi] = {next_node++, ni + nj, std::min(act[bi].min_leaf, act[bj].min_leaf)};
        slots.erase(std::find(slots.begin(), slots.end(), bj));
    }
    return dend;
}

Clustering flat_cut(const Dendrogram& dend, int c) {
    const int k = int(dend.num_leaves());
    if (c < 1 || c > k)
        throw ArgumentError("flat_cut: cluster count out of range [1, " +
                            std::to_string(k) + "]");
    // union-find over nodes, applying the first k-c merges
    std::vector<int> parent(2 * k - 1);
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = int(i);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int m = 0; m < k - c; ++m) {
        const int node = k + m;
        parent[find(dend.merges[m].left)] = node;
        parent[find(dend.merges[m].right)] = node;
    }
    Clustering cl;
    cl.ids = dend.leaf_ids;
    cl.labels.resize(k);
    std::map<int, int> label_of_root;
    int next_label = 1;
    for (int i = 0; i < k; ++i) {
        const int root = find(i);
        auto it = label_of_root.find(root);
        if (it == label_of_root.end())
            it = label_of_root.emplace(root, next_label++).first;
        cl.labels[i] = it->second;
    }
    return cl;
}

namespace {

void collect_leaves(const Dendrogram& dend, int node, std::vector<int>& out) {
    const int k = int(dend.num_leaves());
    if (node < k) {
        out.push_back(node);
        return;
    }
    const auto& m = dend.merges[node - k];
    collect_leaves(dend, m.left, out);
    collect_leaves(dend, m.right, out);
}

int min_leaf_under(const Dendrogram& dend, int node) {
    const int k = int(dend.num_leaves());
    if (node < k) return node;
    const auto& m = dend.merges[node - k];
    return std::min(min_leaf_under(dend, m.left), min_leaf_under(dend, m.right));
}

void seriate_rec(const Dendrogram& dend, int node, std::vector<int>& out) {
    const int k = int(dend.num_leaves());
    if (node < k) {
        out.push_back(node);
        return;
    }
    const auto& m = dend.merges[node - k];
    int first = m.left, second = m.right;
    if (min_leaf_under(dend, second) < min_leaf_under(dend, first))
        std::swap(first, second);
    seriate_rec(dend, first, out);
    seriate_rec(dend, second, out);
}

} // namespace

std::vector<int> seriate(const Dendrogram& dend) {
    std::vector<int> order;
    order.reserve(dend.num_leaves());
    seriate_rec(dend, int(2 * dend.num_leaves() - 2), order);
    return order;
}

PartitionGraph compare_clusterings(const std::vector<Clustering>& clusterings) {
    if (clusterings.empty())
        throw ArgumentError("compare_clusterings: no clusterings");
    const auto& ids0 = clusterings[0].ids;
    for (const auto& c : clusterings) {
        if (c.ids != ids0)
            throw ValidationError("compare_clusterings: mismatched id sets");
        if (c.labels.size() != c.ids.size())
            throw ValidationError("compare_clusterings: label/id length mismatch");
    }

    PartitionGraph g;
    g.columns = clusterings;
    for (std::size_t col = 0; col + 1 < clusterings.size(); ++col) {
        const auto& a = clusterings[col];
        const auto& b = clusterings[col + 1];
        std::map<std::pair<int, int>, int> cont;
        for (std::size_t i = 0; i < ids0.size(); ++i)
            cont[{a.labels[i], b.labels[i]}]++;
        std::vector<PartitionGraph::Edge> layer;
        for (const auto& [key, count] : cont)
            layer.push_back({int(col), key.first, key.second, count});

        int crossings = 0;
        for (std::size_t e1 = 0; e1 < layer.size(); ++e1)
            for (std::size_t e2 = e1 + 1; e2 < layer.size(); ++e2) {
                const auto& x = layer[e1];
                const auto& y = layer[e2];
                if ((x.cluster_a < y.cluster_a && x.cluster_b > y.cluster_b) ||
                    (x.cluster_a > y.cluster_a && x.cluster_b < y.cluster_b))
                    ++crossings;
            }
        g.layer_stats.push_back({int(layer.size()), crossings});
        g.edges.insert(g.edges.end(), layer.begin(), layer.end());
    }
    return g;
}

double spatial_homogeneity(const Clustering& c,
                           const std::map<std::string, std::string>& state_of) {
    std::map<std::string, std::set<int>> clusters_in_state;
    for (std::size_t i = 0; i < c.ids.size(); ++i) {
        auto it = state_of.find(c.ids[i]);
        if (it == state_of.end())
            throw ValidationError("spatial_homogeneity: no state for " + c.ids[i]);
        clusters_in_state[it->second].insert(c.labels[i]);
    }
    double total = 0.0;
    for (const auto& [state, labels] : clusters_in_state)
        total += double(labels.size());
    return total / double(clusters_in_state.size());
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

namespace {

void newick_rec(const Dendrogram& dend, int node, double parent_height,
                std::string& out) {
    const int k = int(dend.num_leaves());
    if (node < k) {
        out += dend.leaf_ids[node];
        out += ':';
        out += csv::format_double(parent_height);
        return;
    }
    const auto& m = dend.merges[node - k];
    int first = m.left, second = m.right;
    if (min_leaf_under(dend, second) < min_leaf_under(dend, first))
        std::swap(first, second);
    out += '(';
    newick_rec(dend, first, m.height, out);
    out += ',';
    newick_rec(dend, second, m.height, out);
    out += "):";
    out += csv::format_double(parent_height - m.height);
}

} // namespace

std::string dendrogram_to_newick(const Dendrogram& dend) {
    std::string out;
    const int root = int(2 * dend.num_leaves() - 2);
    const double root_height = dend.merges.back().height;
    const int k = int(dend.num_leaves());
    const auto& m = dend.merges[root - k];
    int first = m.left, second = m.right;
    if (min_leaf_under(dend, second) < min_leaf_under(dend, first))
        std::swap(first, second);
    out += '(';
    newick_rec(dend, first, root_height, out);
    out += ',';
    newick_rec(dend, second, root_height, out);
    out += ");";
    return out;
}

std::string dendrogram_to_json(const Dendrogram& dend) {
    nlohmann::json j;
    j["leaf_ids"] = dend.leaf_ids;
    auto& merges = j["merges"] = nlohmann::json::array();
    for (const auto& m : dend.merges)
        merges.push_back({{"left", m.left},
                          {"right", m.right},
                          {"height", m.height},
                          {"size", m.size}});
    return j.dump(2);
}

std::string partition_graph_to_dot(const PartitionGraph& g) {
    std::string out = "digraph partition_graph {\n  rankdir=LR;\n  node [shape=box];\n";
    for (std::size_t col = 0; col < g.columns.size(); ++col) {
        const auto& c = g.columns[col];
        std::map<int, int> sizes;
        for (int l : c.labels) sizes[l]++;
        out += "  subgraph cluster_col" + std::to_string(col) + " {\n";
        out += "    label=\"clustering " + std::to_string(col + 1) + "\";\n";
        for (const auto& [label, size] : sizes) {
            out += "    c" + std::to_string(col) + "_" + std::to_string(label) +
                   " [label=\"" + std::to_string(label) + " (" +
                   std::to_string(size) + ")\", height=" +
                   csv::format_double(0.3 + 0.05 * size) + "];\n";
        }
        out += "  }\n";
    }
    for (const auto& e : g.edges)
        out += "  c" + std::to_string(e.col) + "_" + std::to_string(e.cluster_a) +
               " -> c" + std::to_string(e.col + 1) + "_" +
               std::to_string(e.cluster_b) + " [label=\"" +
               std::to_string(e.shared_count) + "\"];\n";
    out += "}\n";
    return out;
}

std::string partition_graph_to_json(const PartitionGraph& g) {
    nlohmann::json j;
    auto& cols = j["columns"] = nlohmann::json::array();
    for (const auto& c : g.columns)
        cols.push_back({{"ids", c.ids}, {"labels", c.labels}});
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges)
        edges.push_back({{"col", e.col},
                         {"cluster_a", e.cluster_a},
                         {"cluster_b", e.cluster_b},
                         {"shared_count", e.shared_count}});
    auto& stats = j["layer_stats"] = nlohmann::json::array();
    for (const auto& s : g.layer_stats)
        stats.push_back(
            {{"edge_count", s.edge_count}, {"crossing_count", s.crossing_count}});
    return j.dump(2);
}

void write_seriated_csv(const std::string& path, const DistanceMatrix& m,
                        const Dendrogram& dend) {
    if (m.ids != dend.leaf_ids)
        throw ValidationError("write_seriated_csv: id mismatch");
    const auto order = seriate(dend);
    csv::Table t;
    for (int idx : order) t.header.push_back(m.ids[std::size_t(idx)]);
    for (int i : order) {
        std::vector<std::string> row;
        for (int j : order)
            row.push_back(
                csv::format_double(m.at(std::size_t(i), std::size_t(j))));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

} // namespace otseries
