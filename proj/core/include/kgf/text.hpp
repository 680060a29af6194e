#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kgf {

// Lowercases, replaces ASCII punctuation with spaces, collapses runs of
// whitespace and trims the ends. Deterministic; safe on UTF-8 input (bytes
// outside the ASCII range pass through untouched).
std::string normalize_term(std::string_view text);

// Whitespace tokenizer over an already-normalized string.
std::vector<std::string> tokenize(std::string_view normalized);

// Token-set Jaccard similarity between two normalized strings.
// Empty-vs-empty is 0.
double token_jaccard(std::string_view normalized_a, std::string_view normalized_b);

// Cosine similarity; 0 when either vector has zero norm.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Joins with a separator; the workhorse for prompt rendering.
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split_lines(std::string_view text);

}  // namespace kgf
