#pragma once

// Clone/non-clone corpus generation from seed programs grouped by
// functionality, plus the on-disk corpus layout.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pdgsim/frontend.hpp"

namespace pdgsim {

enum class TransformKind { Rename, Reorder, LoopConvert, DeadCode, Reassociate };
inline constexpr int kTransformKindCount = 5;

std::string transform_name(TransformKind k);
TransformKind parse_transform(const std::string& s);

// Applies one semantics-preserving rewrite at a randomly chosen legal site.
// The result always lowers; throws NotApplicable when no site exists.
Ast transform(const Ast& program, TransformKind kind, std::mt19937_64& rng);
std::string transform_source(const std::string& source, TransformKind kind, std::mt19937_64& rng);

// Consistent renaming of every variable (parameters included).
Ast rename_variables(const Ast& program, const std::map<std::string, std::string>& mapping);

struct SeedProgram {
  std::string name;
  std::string source;
};

struct SeedGroup {
  std::string name;
  std::vector<SeedProgram> programs;
};

// Built-in functionality groups, two algorithmically distinct variants each.
const std::vector<SeedGroup>& builtin_seed_groups();

// Reads <dir>/<group>/<name>.src; groups and files are taken in sorted order.
std::vector<SeedGroup> load_seed_groups(const std::filesystem::path& dir);

struct LabeledPair {
  std::string source_a;
  std::string source_b;
  int label = 0;
  std::string provenance;
};

inline constexpr const char* kDistinctProvenance = "distinct-functionality";

// Half (rounded down) non-clone pairs, the rest clones. Clones pair a seed
// with a transformed copy of itself or of a sibling variant; non-clones pair
// seeds of different groups, the second one transformed.
std::vector<LabeledPair> generate_dataset(const std::vector<SeedGroup>& groups, int n_pairs,
                                          std::uint64_t seed);

enum class Split { Train, Val, Test };
std::string split_name(Split s);
Split parse_split(const std::string& s);

// Seeded shuffle, then the first 70% train, next 15% val, rest test.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed);

struct CorpusEntry {
  std::string id;
  LabeledPair pair;
  Split split = Split::Train;
};

// pairs/<id>/{a.src, b.src, meta.json} plus index.json with the split column.
void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusEntry>& entries,
                  std::uint64_t seed);
std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir);

std::vector<CorpusEntry> make_corpus(const std::vector<LabeledPair>& pairs, std::uint64_t seed);

}  // namespace pdgsim
