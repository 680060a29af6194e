#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgf/gateway.hpp"
#include "kgf/pipeline.hpp"
#include "kgf/prompts.hpp"

namespace kgf {

struct KMeansResult {
    std::vector<int> assignment;           // vector index -> cluster index
    std::vector<double> objective_trace;   // sum of squared distances per iteration
    int iterations = 0;
};

// Lloyd iterations with seeded k-means++ initialization. Converges when
// assignments stabilize or after max_iterations. When |vectors| <= k each
// vector gets its own cluster; empty clusters are re-seeded from the point
// farthest from its assigned centroid. Throws std::invalid_argument for
// empty input, k < 1, or zero-dimension vectors.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, std::uint64_t seed,
                    int max_iterations = 100);

enum class ConsolidationMode { ClusterMerge, LlmSelection, Off };

const char* consolidation_mode_name(ConsolidationMode m);

struct ConsolidationOutcome {
    QuestionSet set;
    std::size_t duplicates_removed = 0;
    std::size_t merge_calls = 0;
    std::size_t merge_failures = 0;  // fell back to the centroid-closest member
    std::vector<std::string> flags;
};

// Budget-controlled reduction: exact duplicates drop first, the remainder is
// embedded and clustered into K = min(budget, n) clusters, and every
// multi-member cluster is merged into one question via the gateway (falling
// back to the centroid-closest member when the merge is unparseable). Output
// count never exceeds the budget or the input count.
ConsolidationOutcome consolidate(const QuestionSet& questions, Gateway& gateway, const PromptSet& prompts,
                                 int budget, std::uint64_t seed,
                                 ConsolidationMode mode = ConsolidationMode::ClusterMerge);

}  // namespace kgf
