#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kgf/pipeline.hpp"

namespace kgf {

struct BenchmarkInstance {
    std::string instance_id;
    Conversation conversation;
    std::vector<std::pair<std::string, double>> truth;  // (question text, weight > 0)
    std::optional<std::string> theme;
};

enum class BenchmarkDialect {
    Weighted,    // each truth entry carries an explicit positive weight
    Unweighted,  // truth entries are bare strings or weightless objects; weight 1
};

class BenchmarkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Line-delimited records: {"instance_id", "conversation": {"turns": [...]},
// "truth": [...], "theme"?}. Validates every invariant (non-empty truth,
// positive weights, at least one patient turn) and names the offending
// instance in errors.
std::vector<BenchmarkInstance> load_benchmark(std::istream& in, BenchmarkDialect dialect);
std::vector<BenchmarkInstance> load_benchmark_file(const std::string& path, BenchmarkDialect dialect);

// Conversations-only records: {"instance_id", "turns": [{"speaker", "text"}]}.
std::vector<Conversation> load_conversations(std::istream& in);
std::vector<Conversation> load_conversations_file(const std::string& path);

}  // namespace kgf
