#pragma once

// Command-line front end. Kept in the library so tests can drive it
// in-process with captured streams.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pdgsim/model.hpp"
#include "pdgsim/training.hpp"

namespace pdgsim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

// Training and model settings merged from defaults, PDGSIM_SEED, a config
// file, and command-line flags (later sources win).
struct CliConfig {
  TrainConfig train;
  ModelConfig model;
};

// Applies one key=value setting. Throws ConfigError on an unknown key or a
// malformed value.
void apply_config_entry(CliConfig& cfg, const std::string& key, const std::string& value);

// key=value per line; blank lines and `#` comments are ignored.
void apply_config_text(CliConfig& cfg, const std::string& text);

// Every setting as sorted key=value lines, in the config file syntax.
std::string format_config(const CliConfig& cfg);

// Seed from PDGSIM_SEED, if set. Throws ConfigError when it is not an integer.
std::optional<std::uint64_t> env_seed();

// Corpus directory as parsed examples grouped by their split column.
DatasetSplit load_dataset(const std::filesystem::path& dir);

// Per-edge attention, averaged over heads and rounds:
// {"edges":[{"src","dst","kind","attn_block1","attn_block2"}]}. Every node
// also gets a "self" entry for its self-loop.
std::string attention_json(const Pdg& pdg, const Model& model);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pdgsim
