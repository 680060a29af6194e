#include "kgf/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "kgf/text.hpp"

namespace kgf {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

std::string numbered_block(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, std::uint64_t seed,
                    int max_iterations) {
    if (vectors.empty()) throw std::invalid_argument("kmeans: no vectors");
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    const std::size_t dim = vectors.front().size();
    if (dim == 0) throw std::invalid_argument("kmeans: zero-dimension vectors");
    for (const auto& v : vectors) {
        if (v.size() != dim) throw std::invalid_argument("kmeans: inconsistent vector dimensions");
    }

    const std::size_t n = vectors.size();
    KMeansResult result;

    if (n <= static_cast<std::size_t>(k)) {
        result.assignment.resize(n);
        for (std::size_t i = 0; i < n; ++i) result.assignment[i] = static_cast<int>(i);
        result.objective_trace.push_back(0.0);
        return result;
    }

    // k-means++ seeding: first centroid uniform, then D^2-weighted picks.
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(static_cast<std::size_t>(k));
    {
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        centroids.push_back(vectors[first(rng)]);
        std::vector<double> d2(n);
        while (centroids.size() < static_cast<std::size_t>(k)) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::max();
                for (const auto& c : centroids) best = std::min(best, squared_distance(vectors[i], c));
                d2[i] = best;
                total += best;
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double r = u(rng);
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
            } else {
                std::uniform_int_distribution<std::size_t> any(0, n - 1);
                pick = any(rng);
            }
            centroids.push_back(vectors[pick]);
        }
    }

    std::vector<int> assignment(n, -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        // Assignment step (ties resolve to the lowest cluster index).
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                double d = squared_distance(vectors[i], centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            objective += best_d;
            if (assignment[i] != best) {
                assignment[i] = best;
                changed = true;
            }
        }
        result.objective_trace.push_back(objective);
        result.iterations = iter + 1;
        if (!changed && iter > 0) break;

        // Update step.
        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = static_cast<std::size_t>(assignment[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += vectors[i][d];
        }
        for (int c = 0; c < k; ++c) {
            auto cc = static_cast<std::size_t>(c);
            if (counts[cc] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d) {
                centroids[cc][d] = sums[cc][d] / static_cast<double>(counts[cc]);
            }
        }

        // Re-seed empty clusters from the farthest point.
        std::set<std::size_t> taken;
        for (int c = 0; c < k; ++c) {
            auto cc = static_cast<std::size_t>(c);
            if (counts[cc] != 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken.count(i)) continue;
                auto ai = static_cast<std::size_t>(assignment[i]);
                if (counts[ai] <= 1) continue;  // do not strand another cluster
                double d = squared_distance(vectors[i], centroids[ai]);
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst < 0.0) continue;
            centroids[cc] = vectors[worst_i];
            taken.insert(worst_i);
        }
    }
    result.assignment = std::move(assignment);
    return result;
}

const char* consolidation_mode_name(ConsolidationMode m) {
    switch (m) {
        case ConsolidationMode::ClusterMerge: return "cluster-merge";
        case ConsolidationMode::LlmSelection: return "llm-selection";
        case ConsolidationMode::Off: return "off";
    }
    return "cluster-merge";
}

ConsolidationOutcome consolidate(const QuestionSet& questions, Gateway& gateway, const PromptSet& prompts,
                                 int budget, std::uint64_t seed, ConsolidationMode mode) {
    if (budget < 1) throw std::invalid_argument("consolidate: budget must be >= 1");

    ConsolidationOutcome outcome;
    outcome.set.config_hash = questions.config_hash;
    if (mode == ConsolidationMode::Off) {
        outcome.set = questions;
        return outcome;
    }

    // Exact-duplicate strings drop first (keep the first occurrence; its
    // provenance absorbs the duplicates').
    std::vector<FollowupQuestion> distinct;
    std::map<std::string, std::size_t> first_seen;
    for (const auto& q : questions.questions) {
        auto it = first_seen.find(q.text);
        if (it == first_seen.end()) {
            first_seen.emplace(q.text, distinct.size());
            distinct.push_back(q);
        } else {
            ++outcome.duplicates_removed;
            auto& prov = distinct[it->second].provenance;
            for (const auto& p : q.provenance) {
                if (std::find(prov.begin(), prov.end(), p) == prov.end()) prov.push_back(p);
            }
        }
    }
    if (distinct.empty()) return outcome;

    if (mode == ConsolidationMode::LlmSelection) {
        // Table-2 style trimming: rank the questions, keep the top `budget`.
        if (distinct.size() <= static_cast<std::size_t>(budget)) {
            outcome.set.questions = std::move(distinct);
            return outcome;
        }
        std::vector<std::string> texts;
        texts.reserve(distinct.size());
        for (const auto& q : distinct) texts.push_back(q.text);
        const PromptTemplate& tmpl = prompts.get(PromptRole::RankEntity);
        PromptRequest req;
        req.role = PromptRole::RankEntity;
        req.system_text = tmpl.system_text;
        req.user_text = render_template(
            tmpl.user_template,
            {{"conversation", "(question selection)"}, {"candidates", numbered_block(texts)}});
        req.temperature = gateway.config().temperature_analytic;
        req.max_tokens = gateway.config().max_tokens;
        Completion ranked = gateway.complete(req);
        std::vector<std::size_t> order;
        if (ranked.parse_ok) {
            std::map<std::string, std::size_t> by_text;
            for (std::size_t i = 0; i < texts.size(); ++i) by_text.emplace(normalize_term(texts[i]), i);
            std::set<std::size_t> used;
            for (const auto& item : ranked.items) {
                auto it = by_text.find(normalize_term(item));
                if (it != by_text.end() && used.insert(it->second).second) order.push_back(it->second);
            }
            for (std::size_t i = 0; i < texts.size(); ++i) {
                if (!used.count(i)) order.push_back(i);
            }
        } else {
            outcome.flags.push_back("llm-selection-fallback");
            for (std::size_t i = 0; i < texts.size(); ++i) order.push_back(i);
        }
        order.resize(static_cast<std::size_t>(budget));
        for (std::size_t i : order) outcome.set.questions.push_back(distinct[i]);
        return outcome;
    }

    // Cluster-merge: embed, K-means with K = min(budget, n), merge each
    // multi-member cluster into a single question.
    std::vector<std::string> texts;
    texts.reserve(distinct.size());
    for (const auto& q : distinct) texts.push_back(q.text);
    auto vectors = gateway.embed(texts);
    int k = std::min<int>(budget, static_cast<int>(distinct.size()));
    auto clustering = kmeans(vectors, k, seed);

    std::map<int, std::vector<std::size_t>> clusters;  // cluster -> member indices (input order)
    for (std::size_t i = 0; i < distinct.size(); ++i) clusters[clustering.assignment[i]].push_back(i);

    const std::size_t dim = vectors.front().size();
    for (const auto& [cluster, members] : clusters) {
        if (members.size() == 1) {
            outcome.set.questions.push_back(distinct[members.front()]);
            continue;
        }

        // Centroid of the members, then the member closest to it; that member
        // donates the channel and is the merge fallback.
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i : members) {
            for (std::size_t d = 0; d < dim; ++d) centroid[d] += vectors[i][d];
        }
        for (double& x : centroid) x /= static_cast<double>(members.size());
        std::size_t closest = members.front();
        double best = std::numeric_limits<double>::max();
        for (std::size_t i : members) {
            double d = squared_distance(vectors[i], centroid);
            if (d < best) {
                best = d;
                closest = i;
            }
        }

        std::vector<std::string> member_texts;
        member_texts.reserve(members.size());
        for (std::size_t i : members) member_texts.push_back(distinct[i].text);

        const PromptTemplate& tmpl = prompts.get(PromptRole::Merge);
        PromptRequest req;
        req.role = PromptRole::Merge;
        req.system_text = tmpl.system_text;
        req.user_text = render_template(tmpl.user_template, {{"questions", numbered_block(member_texts)}});
        req.temperature = gateway.config().temperature_analytic;
        req.max_tokens = gateway.config().max_tokens;

        FollowupQuestion merged;
        merged.channel = distinct[closest].channel;
        for (std::size_t i : members) {
            for (const auto& p : distinct[i].provenance) {
                if (std::find(merged.provenance.begin(), merged.provenance.end(), p) ==
                    merged.provenance.end()) {
                    merged.provenance.push_back(p);
                }
            }
        }
        ++outcome.merge_calls;
        bool ok = false;
        try {
            Completion c = gateway.complete(req);
            if (c.parse_ok && !c.items.empty()) {
                merged.text = c.items.front();
                ok = true;
            }
        } catch (const GatewayError&) {
            ok = false;
        }
        if (!ok) {
            ++outcome.merge_failures;
            outcome.flags.push_back("merge-fallback");
            merged.text = distinct[closest].text;
        }
        outcome.set.questions.push_back(std::move(merged));
    }
    return outcome;
}

}  // namespace kgf
