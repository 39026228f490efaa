#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "l2r/bilevel.hpp"
#include "l2r/gnn.hpp"
#include "l2r/graph.hpp"

namespace l2r {

/// Reads a flat `key = value` file. Blank lines and lines starting with '#' are
/// ignored. Returns the entries as command-line tokens ("--key", "value") in
/// file order, so that later real flags override them.
/// Throws ParseError (with line number) on malformed lines or an unreadable file.
std::vector<std::string> read_config_args(const std::filesystem::path& path);
std::vector<std::string> parse_config_args(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Stable key=value rendering of everything that influences a run (seed excluded).
std::string canonical_config(const SyntheticSpec& data, const ModelConfig& model, const TrainConfig& train);
std::string canonical_config(const SyntheticSpec& data);
std::string config_hash(const std::string& canonical);

}  // namespace l2r
