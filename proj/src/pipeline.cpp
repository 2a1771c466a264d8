#include "hicenhance/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hicenhance/binio.hpp"
#include "hicenhance/errors.hpp"

namespace hicenhance::pipeline {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

long parse_int(const std::string& tok, const std::string& path, int line) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(tok, &pos);
    } catch (const std::exception&) {
        fail(path, line, "expected an integer, got '" + tok + "'");
    }
    if (pos != tok.size()) fail(path, line, "expected an integer, got '" + tok + "'");
    return v;
}

double parse_real(const std::string& tok, const std::string& path, int line) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        fail(path, line, "expected a number, got '" + tok + "'");
    }
    if (pos != tok.size()) fail(path, line, "expected a number, got '" + tok + "'");
    if (!std::isfinite(v)) fail(path, line, "non-finite value '" + tok + "'");
    return v;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

ContactMap parse_coo(const std::vector<std::string>& lines, const std::string& path) {
    const auto header = tokenize(lines.empty() ? "" : lines[0]);
    if (header.size() != 2) fail(path, 1, "expected header 'n bin_size'");
    const long n = parse_int(header[0], path, 1);
    const long bin = parse_int(header[1], path, 1);
    if (n < 1) fail(path, 1, "bin count must be >= 1");
    if (bin < 1) fail(path, 1, "bin size must be >= 1");
    ContactMap m(static_cast<int>(n), static_cast<int>(bin));
    std::set<std::pair<int, int>> seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const int lineno = static_cast<int>(li) + 1;
        const auto toks = tokenize(lines[li]);
        if (toks.empty()) continue;
        if (toks.size() != 3) fail(path, lineno, "expected 'i j count'");
        const long i = parse_int(toks[0], path, lineno);
        const long j = parse_int(toks[1], path, lineno);
        const double v = parse_real(toks[2], path, lineno);
        if (i < 0 || i >= n || j < 0 || j >= n) fail(path, lineno, "bin index out of range");
        if (v < 0.0) fail(path, lineno, "negative count");
        const int lo = static_cast<int>(std::min(i, j));
        const int hi = static_cast<int>(std::max(i, j));
        if (!seen.insert({lo, hi}).second)
            fail(path, lineno, "duplicate entry for this bin pair");
        m.at(lo, hi) = v;
        m.at(hi, lo) = v;
    }
    return m;
}

ContactMap parse_dense(const std::vector<std::string>& lines, const std::string& path) {
    std::vector<std::vector<double>> rows;
    std::vector<int> row_line;  // source line number of each matrix row
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const int lineno = static_cast<int>(li) + 1;
        const auto toks = tokenize(lines[li]);
        if (toks.empty()) continue;
        std::vector<double> row;
        row.reserve(toks.size());
        for (const auto& t : toks) {
            const double v = parse_real(t, path, lineno);
            if (v < 0.0) fail(path, lineno, "negative count");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows[0].size())
            fail(path, lineno, "ragged row: expected " + std::to_string(rows[0].size()) +
                                   " columns, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
        row_line.push_back(lineno);
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty matrix");
    if (rows.size() != rows[0].size())
        throw std::runtime_error(path + ": matrix is " + std::to_string(rows.size()) + "x" +
                                 std::to_string(rows[0].size()) + ", expected square");
    const int n = static_cast<int>(rows.size());
    ContactMap m(n, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m.at(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double a = m.at(i, j), b = m.at(j, i);
            if (std::abs(a - b) > 1e-6)
                fail(path, row_line[static_cast<std::size_t>(j)],
                     "asymmetric entries at (" + std::to_string(i) + "," + std::to_string(j) +
                         "): " + std::to_string(a) + " vs " + std::to_string(b));
            // Averaging sub-tolerance read noise keeps the map exactly symmetric.
            m.at(i, j) = m.at(j, i) = 0.5 * (a + b);
        }
    return m;
}

}  // namespace

void ContactMap::validate() const {
    if (n < 1 || counts.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("contact map: inconsistent dimensions");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = at(i, j);
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("contact map: entries must be finite and >= 0");
            if (v != at(j, i)) throw std::invalid_argument("contact map: not symmetric");
        }
}

ContactMap load_map(const std::string& path, MapFormat fmt) {
    const auto lines = read_lines(path);
    if (fmt == MapFormat::autodetect) {
        // A COO header has exactly two tokens; a dense matrix row of length
        // two would be followed by another two-token row, not three.
        std::vector<std::string> first, second;
        for (const auto& l : lines) {
            auto toks = tokenize(l);
            if (toks.empty()) continue;
            if (first.empty())
                first = std::move(toks);
            else {
                second = std::move(toks);
                break;
            }
        }
        fmt = (first.size() == 2 && (second.empty() || second.size() == 3)) ? MapFormat::coo
                                                                            : MapFormat::dense;
    }
    ContactMap m = fmt == MapFormat::coo ? parse_coo(lines, path) : parse_dense(lines, path);
    m.validate();
    return m;
}

void save_map(const ContactMap& map, const std::string& path, MapFormat fmt) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        f.precision(17);
        if (fmt == MapFormat::coo || fmt == MapFormat::autodetect) {
            f << map.n << ' ' << map.bin_size << '\n';
            for (int i = 0; i < map.n; ++i)
                for (int j = i; j < map.n; ++j)
                    if (map.at(i, j) != 0.0) f << i << ' ' << j << ' ' << map.at(i, j) << '\n';
        } else {
            for (int i = 0; i < map.n; ++i) {
                for (int j = 0; j < map.n; ++j) f << (j ? " " : "") << map.at(i, j);
                f << '\n';
            }
        }
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

ContactMap balance(const ContactMap& map, double tol, int max_iter) {
    map.validate();
    ContactMap out = map;
    const int n = out.n;
    std::vector<double> rs(static_cast<std::size_t>(n));
    std::vector<char> active(static_cast<std::size_t>(n), 0);
    auto row_sums = [&]() {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += out.at(i, j);
            rs[static_cast<std::size_t>(i)] = s;
        }
    };
    row_sums();
    int live = 0;
    for (int i = 0; i < n; ++i)
        if (rs[static_cast<std::size_t>(i)] > 0.0) {
            active[static_cast<std::size_t>(i)] = 1;
            ++live;
        }
    if (live == 0) return out;  // nothing to balance

    std::vector<double> d(static_cast<std::size_t>(n), 1.0);
    double resid = 0.0;
    for (int iter = 0; iter <= max_iter; ++iter) {
        double target = 0.0;
        for (int i = 0; i < n; ++i)
            if (active[static_cast<std::size_t>(i)]) target += rs[static_cast<std::size_t>(i)];
        target /= live;
        resid = 0.0;
        for (int i = 0; i < n; ++i)
            if (active[static_cast<std::size_t>(i)])
                resid = std::max(resid,
                                 std::abs(rs[static_cast<std::size_t>(i)] - target) / target);
        if (resid <= tol) return out;
        if (iter == max_iter) break;
        for (int i = 0; i < n; ++i)
            d[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(i)]
                                                 ? std::sqrt(target / rs[static_cast<std::size_t>(i)])
                                                 : 1.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out.at(i, j) *= d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(j)];
        row_sums();
    }
    throw NumericError("balance: no convergence after " + std::to_string(max_iter) +
                       " iterations (relative residual " + std::to_string(resid) + ")");
}

ContactMap downsample_reads(const ContactMap& map, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("downsample: ratio must be in (0, 1]");
    map.validate();
    if (ratio == 1.0) return map;
    ContactMap out = map;
    std::mt19937_64 gen(seed);
    for (int i = 0; i < map.n; ++i)
        for (int j = i; j < map.n; ++j) {
            const auto count = static_cast<long long>(std::nearbyint(map.at(i, j)));
            long long draw = 0;
            if (count > 0) draw = std::binomial_distribution<long long>(count, ratio)(gen);
            out.at(i, j) = static_cast<double>(draw);
            out.at(j, i) = static_cast<double>(draw);
        }
    return out;
}

Normalized normalize_values(const ContactMap& map) {
    map.validate();
    std::vector<double> sorted = map.counts;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.back() <= 0.0)
        throw std::runtime_error("normalize: all-zero map has no scale");
    // Nearest-rank 99.9th percentile; an overwhelmingly sparse map can put
    // the percentile on zero, in which case the max is the only usable scale.
    std::size_t idx = static_cast<std::size_t>(
                          std::ceil(0.999 * static_cast<double>(sorted.size()))) - 1;
    double scale = sorted[idx];
    if (scale <= 0.0) scale = sorted.back();
    Normalized out{map, scale};
    for (double& v : out.map.counts) v = std::min(v, scale) / scale;
    return out;
}

ContactMap denormalize_values(const ContactMap& map, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("denormalize: scale must be > 0");
    ContactMap out = map;
    for (double& v : out.counts) v *= scale;
    return out;
}

PatchSet extract_patches(const ContactMap& map, int side) {
    map.validate();
    if (side < 1) throw std::invalid_argument("patches: side must be >= 1");
    if (map.n < side)
        throw std::invalid_argument("patches: map smaller than one " + std::to_string(side) +
                                    "-bin tile");
    PatchSet ps;
    ps.side = side;
    ps.blocks = map.n / side;
    ps.chrom = map.chrom;
    for (int bi = 0; bi < ps.blocks; ++bi)
        for (int bj = 0; bj < ps.blocks; ++bj) {
            Patch p;
            p.row_block = bi;
            p.col_block = bj;
            p.data = Tensor({side, side});
            for (int i = 0; i < side; ++i)
                for (int j = 0; j < side; ++j)
                    p.data.at(i, j) = map.at(bi * side + i, bj * side + j);
            ps.patches.push_back(std::move(p));
        }
    return ps;
}

ContactMap reassemble(const PatchSet& ps) {
    const int n = ps.blocks * ps.side;
    if (n < 1) throw std::invalid_argument("reassemble: empty patch set");
    ContactMap m(n, 1);
    m.chrom = ps.chrom;
    for (const Patch& p : ps.patches) {
        if (p.row_block < 0 || p.row_block >= ps.blocks || p.col_block < 0 ||
            p.col_block >= ps.blocks)
            throw std::invalid_argument("reassemble: patch origin outside the tiling");
        for (int i = 0; i < ps.side; ++i)
            for (int j = 0; j < ps.side; ++j)
                m.at(p.row_block * ps.side + i, p.col_block * ps.side + j) = p.data.at(i, j);
    }
    return m;
}

void save_patches(const PatchSet& ps, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        binio::put_u8(f, 1);
        binio::put_u32(f, static_cast<std::uint32_t>(ps.patches.size()));
        binio::put_u32(f, static_cast<std::uint32_t>(ps.side));
        binio::put_u32(f, static_cast<std::uint32_t>(ps.blocks));
        for (const Patch& p : ps.patches) {
            binio::put_u32(f, static_cast<std::uint32_t>(p.row_block));
            binio::put_u32(f, static_cast<std::uint32_t>(p.col_block));
            for (double v : p.data.v) binio::put_f32(f, static_cast<float>(v));
        }
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

PatchSet load_patches(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    if (binio::get_u8(f) != 1) throw std::runtime_error(path + ": unsupported patch version");
    const std::uint32_t count = binio::get_u32(f);
    PatchSet ps;
    ps.side = static_cast<int>(binio::get_u32(f));
    ps.blocks = static_cast<int>(binio::get_u32(f));
    if (ps.side < 1) throw std::runtime_error(path + ": invalid patch side");
    for (std::uint32_t k = 0; k < count; ++k) {
        Patch p;
        p.row_block = static_cast<int>(binio::get_u32(f));
        p.col_block = static_cast<int>(binio::get_u32(f));
        p.data = Tensor({ps.side, ps.side});
        for (double& v : p.data.v) v = static_cast<double>(binio::get_f32(f));
        ps.patches.push_back(std::move(p));
    }
    return ps;
}

namespace {

std::string normalize_label(const std::string& label) {
    std::string s = label;
    if (s.size() >= 3 && std::tolower(static_cast<unsigned char>(s[0])) == 'c' &&
        std::tolower(static_cast<unsigned char>(s[1])) == 'h' &&
        std::tolower(static_cast<unsigned char>(s[2])) == 'r')
        s = s.substr(3);
    return s;
}

}  // namespace

Subset classify_chromosome(const std::string& label, const SplitLists& lists) {
    const std::string s = normalize_label(label);
    if (s.empty())
        std::cerr << "warning: empty chromosome label, assigning to train\n";
    for (const auto& v : lists.validation)
        if (s == v) return Subset::validation;
    for (const auto& t : lists.test)
        if (s == t) return Subset::test;
    return Subset::train;
}

DatasetSplit split_dataset(const std::vector<std::string>& chromosomes,
                           const SplitLists& lists) {
    DatasetSplit out;
    for (const auto& c : chromosomes) {
        switch (classify_chromosome(c, lists)) {
            case Subset::validation: out.validation.push_back(c); break;
            case Subset::test: out.test.push_back(c); break;
            case Subset::train: out.train.push_back(c); break;
        }
    }
    return out;
}

std::vector<std::pair<int, int>> tad_layout(int n, std::uint64_t seed, const SynthParams& p) {
    if (!p.with_tads) return {};
    std::mt19937_64 gen(seed);
    std::vector<std::pair<int, int>> tads;
    std::uniform_int_distribution<int> gap(p.gap_min, p.gap_max);
    std::uniform_int_distribution<int> ext(p.tad_min, p.tad_max);
    int a = gap(gen);
    while (a < n) {
        const int last = std::min(a + ext(gen) - 1, n - 1);
        if (last - a + 1 >= p.tad_min) tads.emplace_back(a, last);
        a = last + 1 + gap(gen);
    }
    return tads;
}

ContactMap synthesize_map(int n, std::uint64_t seed, const SynthParams& p) {
    if (n < 40) throw std::invalid_argument("synthesize: n must be >= 40");
    const auto tads = tad_layout(n, seed, p);
    ContactMap m(n, 10000);
    std::mt19937_64 gen(seed ^ 0xD1B54A32D192ED03ull);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double mean = p.scale / (1.0 + (j - i));
            for (const auto& [a, b] : tads) {
                if (i >= a && j <= b) mean *= 3.0;                // inside the block
                if (p.with_loops && i == a && j == b) mean *= 8.0;  // loop peak at the corner
            }
            const double draw =
                mean > 0.0
                    ? static_cast<double>(std::poisson_distribution<long long>(mean)(gen))
                    : 0.0;
            m.at(i, j) = draw;
            m.at(j, i) = draw;
        }
    return m;
}

}  // namespace hicenhance::pipeline
