#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hicenhance/tensor.hpp"

namespace hicenhance::pipeline {

enum class MapFormat { autodetect, coo, dense };

/// Square symmetric contact matrix with non-negative finite entries.
struct ContactMap {
    int n = 0;
    int bin_size = 1;
    std::string chrom;
    std::vector<double> counts;  // n*n, row-major

    ContactMap() = default;
    ContactMap(int n_, int bin_size_) : n(n_), bin_size(bin_size_), counts(static_cast<std::size_t>(n_) * n_, 0.0) {}

    double& at(int i, int j) { return counts[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return counts[static_cast<std::size_t>(i) * n + j]; }

    void validate() const;  // symmetry, non-negativity, finiteness
};

/// Reads a dense whitespace matrix or a COO file ("n bin_size" header then
/// 0-indexed "i j count" triples; upper triangle suffices, entries are
/// mirrored). autodetect sniffs COO by its two-token header.
ContactMap load_map(const std::string& path, MapFormat fmt = MapFormat::autodetect);
void save_map(const ContactMap& map, const std::string& path,
              MapFormat fmt = MapFormat::dense);

/// Symmetric alternating scaling until all unmasked row sums agree with their
/// mean within tol (relative). All-zero rows are left untouched. Throws after
/// max_iter without convergence.
ContactMap balance(const ContactMap& map, double tol = 1e-6, int max_iter = 1000);

/// Binomial thinning: every upper-triangle count (rounded half-to-even) is
/// replaced by a Binomial(count, ratio) draw and mirrored. ratio = 1 returns
/// the map unchanged.
ContactMap downsample_reads(const ContactMap& map, double ratio, std::uint64_t seed);

struct Normalized {
    ContactMap map;
    double scale = 1.0;  // the 99.9th-percentile clip value
};

/// Clip at the 99.9th percentile (nearest-rank over all entries; falls back
/// to the max when the percentile lands on zero), then divide by it.
/// Throws on an all-zero map.
Normalized normalize_values(const ContactMap& map);
ContactMap denormalize_values(const ContactMap& map, double scale);

struct Patch {
    int row_block = 0, col_block = 0;
    Tensor data;  // [side, side]
};

struct PatchSet {
    int side = 40;
    int blocks = 0;  // blocks x blocks patches tile the truncated map
    std::string chrom;
    std::vector<Patch> patches;
};

/// Non-overlapping side x side tiles of the top-left floor(n/side)*side
/// square; the remainder is dropped. Requires n >= side.
PatchSet extract_patches(const ContactMap& map, int side = 40);
/// Exact inverse of extract_patches over the tiled region.
ContactMap reassemble(const PatchSet& ps);

void save_patches(const PatchSet& ps, const std::string& path);
PatchSet load_patches(const std::string& path);

struct SplitLists {
    std::vector<std::string> validation{"2", "6", "10", "12"};
    std::vector<std::string> test{"4", "14", "16", "20"};
};

enum class Subset { train, validation, test };

/// Case-insensitive, tolerates a "chr" prefix; anything not in the validation
/// or test lists lands in train (with a warning for empty labels).
Subset classify_chromosome(const std::string& label, const SplitLists& lists = {});

struct DatasetSplit {
    std::vector<std::string> train, validation, test;
};

DatasetSplit split_dataset(const std::vector<std::string>& chromosomes,
                           const SplitLists& lists = {});

struct SynthParams {
    double scale = 200.0;  // expected count on the diagonal, away from TADs
    bool with_tads = true;
    bool with_loops = true;  // corner-peak enrichment at TAD anchors
    int tad_min = 8, tad_max = 24;  // TAD block extents (bins)
    int gap_min = 4, gap_max = 12;  // gaps between consecutive TADs
};

/// Deterministic TAD intervals [first, last] (inclusive) used by
/// synthesize_map for the same (n, seed, params).
std::vector<std::pair<int, int>> tad_layout(int n, std::uint64_t seed, const SynthParams& p);

/// Synthetic contact map: distance-decay background (expected count
/// proportional to 1/(1+|i-j|)), TAD blocks with x3 enrichment, x8 loop peaks
/// at TAD corners, Poisson-sampled and mirrored.
ContactMap synthesize_map(int n, std::uint64_t seed, const SynthParams& p = {});

}  // namespace hicenhance::pipeline
