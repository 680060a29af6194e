// Shared fixture plumbing for the test binaries.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include "kgf/gateway.hpp"
#include "kgf/kg_store.hpp"

namespace kgf_test {

inline std::string fixtures_dir() {
    if (const char* env = std::getenv("KGF_FIXTURES")) return env;
    throw std::runtime_error("KGF_FIXTURES not set");
}

inline kgf::KnowledgeGraph load_toy_graph() {
    std::ifstream in(std::filesystem::path(fixtures_dir()) / "toy_kg.csv");
    return kgf::KnowledgeGraph::load(in, kgf::GraphFormat::PrimeKG);
}

inline std::shared_ptr<kgf::ScriptedProvider> fixture_provider(std::size_t embed_dim = 256) {
    return std::make_shared<kgf::ScriptedProvider>(
        (std::filesystem::path(fixtures_dir()) / "scripted").string(), embed_dim);
}

}  // namespace kgf_test
