#pragma once

#include "otseries/transport.hpp"
#include "otseries/types.hpp"

#include <map>

namespace otseries {

// Agglomerative merge tree. Leaves are 0..k-1, merge m creates node k+m.
struct Dendrogram {
    struct Merge {
        int left, right;
        double height;
        int size; // leaves under the new node
    };
    std::vector<std::string> leaf_ids;
    std::vector<Merge> merges; // k-1 entries, heights non-decreasing

    std::size_t num_leaves() const { return leaf_ids.size(); }
};

// Lance-Williams Ward recurrence on squared input distances; each merge
// height is the square root of the merged squared dissimilarity, so a
// leaf-pair merge reports its input distance. Ties broken by the pair with
// lexicographically smallest (min id, max id).
Dendrogram ward_linkage(const DistanceMatrix& d);

// Undo the last c-1 merges; labels 1..c assigned in order of first leaf
// appearance in leaf_ids order.
Clustering flat_cut(const Dendrogram& dend, int c);

// Left-to-right leaf order with children ordered by smallest contained leaf id.
std::vector<int> seriate(const Dendrogram& dend);

// Layered contingency structure between consecutive clusterings.
struct PartitionGraph {
    struct Edge {
        int col;       // between columns[col] and columns[col+1]
        int cluster_a; // label in columns[col]
        int cluster_b; // label in columns[col+1]
        int shared_count;
    };
    struct LayerStats {
        int edge_count;
        int crossing_count; // edge pairs crossing under label order
    };
    std::vector<Clustering> columns;
    std::vector<Edge> edges;
    std::vector<LayerStats> layer_stats; // one per adjacent pair
};

PartitionGraph compare_clusterings(const std::vector<Clustering>& clusterings);

// Mean over states of the number of distinct cluster labels among that
// state's cities.
double spatial_homogeneity(const Clustering& c,
                           const std::map<std::string, std::string>& state_of);

// Exports
std::string dendrogram_to_newick(const Dendrogram& dend);
std::string dendrogram_to_json(const Dendrogram& dend);
std::string partition_graph_to_dot(const PartitionGraph& g);
std::string partition_graph_to_json(const PartitionGraph& g);
void write_seriated_csv(const std::string& path, const DistanceMatrix& m,
                        const Dendrogram& dend);

} // namespace otseries
