#include "mushroom/genetics.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/random.hpp"
#include "mushroom/text_io.hpp"

#include <cmath>
#include <random>
#include <set>

namespace mushroom {

namespace {

constexpr double kSymmetryTolerance = 1e-6;

bool comparable(char c) { return c != '-' && c != 'N'; }

int base_index(char c) {
  switch (c) {
  case 'A': return 0;
  case 'C': return 1;
  case 'G': return 2;
  case 'T': return 3;
  default: return -1;
  }
}

void require_same_length(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) {
    throw DataError("sequences differ in length (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
}

struct SiteCounts {
  std::size_t sites = 0;
  std::size_t mismatches = 0;
  std::size_t ag = 0; // purine transitions
  std::size_t ct = 0; // pyrimidine transitions
  std::size_t transversions = 0;
  double base[4] = {0, 0, 0, 0};
};

SiteCounts count_sites(std::string_view a, std::string_view b) {
  require_same_length(a, b);
  SiteCounts s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!comparable(a[i]) || !comparable(b[i])) continue;
    const int x = base_index(a[i]);
    const int y = base_index(b[i]);
    if (x < 0 || y < 0) throw DataError(std::string("illegal nucleotide '") + (x < 0 ? a[i] : b[i]) + "'");
    ++s.sites;
    s.base[x] += 1.0;
    s.base[y] += 1.0;
    if (x == y) continue;
    ++s.mismatches;
    const bool purine_x = x == 0 || x == 2;
    const bool purine_y = y == 0 || y == 2;
    if (purine_x && purine_y) ++s.ag;
    else if (!purine_x && !purine_y) ++s.ct;
    else ++s.transversions;
  }
  if (s.sites == 0) throw DataError("no comparable sites between the two sequences");
  return s;
}

double checked_log(double arg) {
  if (!(arg > 0.0)) throw NumericError("saturated distance: log argument " + format_double(arg) + " <= 0");
  return std::log(arg);
}

} // namespace

AlignedSequenceSet parse_fasta(std::string_view text) {
  AlignedSequenceSet out;
  std::set<std::string> names;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '>') {
      std::string name(trim(line.substr(1)));
      if (name.empty()) throw DataError("FASTA line " + std::to_string(line_no) + ": empty record name");
      if (!names.insert(name).second) throw DataError("FASTA: duplicate record name '" + name + "'");
      out.records.push_back({std::move(name), {}});
      continue;
    }
    if (out.records.empty()) throw DataError("FASTA line " + std::to_string(line_no) + ": sequence before header");
    for (char c : line) {
      const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (base_index(u) < 0 && u != '-' && u != 'N') {
        throw DataError("FASTA line " + std::to_string(line_no) + ": illegal character '" + std::string(1, c) + "'");
      }
      out.records.back().sequence.push_back(u);
    }
  }
  if (out.records.empty()) throw DataError("FASTA: no records");
  for (const auto& r : out.records) {
    if (r.sequence.empty()) throw DataError("FASTA: record '" + r.name + "' has no sequence");
    if (r.sequence.size() != out.length()) {
      throw DataError("FASTA: record '" + r.name + "' has length " + std::to_string(r.sequence.size()) +
                      ", expected " + std::to_string(out.length()));
    }
  }
  return out;
}

std::string emit_fasta(const AlignedSequenceSet& seqs, std::size_t line_width) {
  std::string out;
  for (const auto& r : seqs.records) {
    out += '>' + r.name + '\n';
    for (std::size_t i = 0; i < r.sequence.size(); i += line_width) {
      out += r.sequence.substr(i, line_width) + '\n';
    }
  }
  return out;
}

AlignedSequenceSet load_fasta(const std::string& path) { return parse_fasta(read_text_file(path)); }

double p_distance(std::string_view a, std::string_view b) {
  const SiteCounts s = count_sites(a, b);
  return static_cast<double>(s.mismatches) / static_cast<double>(s.sites);
}

double jc69_from_p(double p) {
  if (p == 0.0) return 0.0;
  return -0.75 * checked_log(1.0 - 4.0 * p / 3.0);
}

double jc69_distance(std::string_view a, std::string_view b) { return jc69_from_p(p_distance(a, b)); }

double tn93_distance(std::string_view a, std::string_view b) {
  const SiteCounts s = count_sites(a, b);
  if (s.mismatches == 0) return 0.0;
  const double n = static_cast<double>(s.sites);
  const double total = 2.0 * n;
  const double pa = s.base[0] / total, pc = s.base[1] / total, pg = s.base[2] / total, pt = s.base[3] / total;
  const double pr = pa + pg, py = pc + pt;
  const double p1 = s.ag / n, p2 = s.ct / n, q = s.transversions / n;

  double d = 0.0;
  if (pa * pg > 0.0) {
    d -= 2.0 * pa * pg / pr * checked_log(1.0 - pr * p1 / (2.0 * pa * pg) - q / (2.0 * pr));
  }
  if (pc * pt > 0.0) {
    d -= 2.0 * pc * pt / py * checked_log(1.0 - py * p2 / (2.0 * pc * pt) - q / (2.0 * py));
  }
  if (pr > 0.0 && py > 0.0) {
    const double coef = pr * py - pa * pg * py / pr - pc * pt * pr / py;
    if (coef != 0.0) d -= 2.0 * coef * checked_log(1.0 - q / (2.0 * pr * py));
  }
  return d;
}

std::string_view distance_model_name(DistanceModel m) {
  switch (m) {
  case DistanceModel::P: return "p";
  case DistanceModel::JC69: return "jc69";
  case DistanceModel::TN93: return "tn93";
  }
  return "unknown";
}

DistanceModel parse_distance_model(std::string_view name) {
  if (name == "p") return DistanceModel::P;
  if (name == "jc69") return DistanceModel::JC69;
  if (name == "tn93") return DistanceModel::TN93;
  throw ArgumentError("unknown distance model '" + std::string(name) + "' (expected p, jc69 or tn93)");
}

double pairwise_distance(std::string_view a, std::string_view b, DistanceModel model) {
  switch (model) {
  case DistanceModel::P: return p_distance(a, b);
  case DistanceModel::JC69: return jc69_distance(a, b);
  case DistanceModel::TN93: return tn93_distance(a, b);
  }
  throw ArgumentError("unknown distance model");
}

std::size_t GeneticDistanceMatrix::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw DataError("species '" + std::string(name) + "' is not in the matrix");
}

GeneticDistanceMatrix distance_matrix(const AlignedSequenceSet& seqs, DistanceModel model) {
  GeneticDistanceMatrix m;
  const std::size_t n = seqs.size();
  m.values.assign(n, std::vector<double>(n, 0.0));
  for (const auto& r : seqs.records) m.names.push_back(r.name);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      m.values[i][j] = m.values[j][i] = pairwise_distance(seqs.records[i].sequence, seqs.records[j].sequence, model);
  return m;
}

GeneticDistanceMatrix bootstrap_uncertainty(const AlignedSequenceSet& seqs, DistanceModel model, int reps,
                                            std::uint64_t seed) {
  if (reps < 2) throw ArgumentError("bootstrap needs at least 2 replicates, got " + std::to_string(reps));
  std::mt19937_64 rng(seed);
  const std::size_t len = seqs.length();
  std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(reps), std::vector<std::size_t>(len));
  for (auto& cols : resamples)
    for (auto& c : cols) c = static_cast<std::size_t>(rnd::index(rng, len));
  return bootstrap_uncertainty(seqs, model, resamples);
}

GeneticDistanceMatrix bootstrap_uncertainty(const AlignedSequenceSet& seqs, DistanceModel model,
                                            const std::vector<std::vector<std::size_t>>& resamples) {
  if (resamples.size() < 2) throw ArgumentError("bootstrap needs at least 2 replicates");
  const std::size_t n = seqs.size();
  std::vector<GeneticDistanceMatrix> reps;
  reps.reserve(resamples.size());
  for (const auto& cols : resamples) {
    AlignedSequenceSet rep;
    for (const auto& r : seqs.records) {
      SequenceRecord out{r.name, std::string(cols.size(), 'N')};
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] >= r.sequence.size()) throw ArgumentError("bootstrap column index out of range");
        out.sequence[k] = r.sequence[cols[k]];
      }
      rep.records.push_back(std::move(out));
    }
    reps.push_back(distance_matrix(rep, model));
  }
  // two-pass variance: mean first, then squared deviations
  const double count = static_cast<double>(reps.size());
  GeneticDistanceMatrix sd;
  for (const auto& r : seqs.records) sd.names.push_back(r.name);
  sd.values.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double mean = 0.0;
      for (const auto& r : reps) mean += r.values[i][j];
      mean /= count;
      double ss = 0.0;
      for (const auto& r : reps) ss += (r.values[i][j] - mean) * (r.values[i][j] - mean);
      sd.values[i][j] = sd.values[j][i] = std::sqrt(ss / (count - 1.0));
    }
  }
  return sd;
}

GeneticDistanceMatrix load_matrix_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& raw : split(text, '\n')) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(split(line, ','));
  }
  if (rows.empty()) throw DataError("matrix CSV is empty");
  const auto& header = rows.front();
  if (header.empty() || trim(header[0]) != "species") throw DataError("matrix CSV header must start with 'species'");

  GeneticDistanceMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.names.emplace_back(trim(header[i]));
  const std::size_t n = m.names.size();
  if (n < 2) throw DataError("matrix CSV needs at least two species");
  if (std::set<std::string>(m.names.begin(), m.names.end()).size() != n) throw DataError("matrix CSV repeats a species name");
  if (rows.size() != n + 1) {
    throw DataError("matrix CSV has " + std::to_string(rows.size() - 1) + " rows for " + std::to_string(n) + " species");
  }

  std::vector<std::vector<bool>> present(n, std::vector<bool>(n, false));
  m.values.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    if (trim(row[0]) != m.names[i]) {
      throw DataError("matrix CSV row " + std::to_string(i + 1) + " is '" + std::string(trim(row[0])) +
                      "', expected '" + m.names[i] + "'");
    }
    if (row.size() > n + 1) throw DataError("matrix CSV row '" + m.names[i] + "' has too many cells");
    for (std::size_t j = 0; j < n; ++j) {
      const std::string_view cell = j + 1 < row.size() ? trim(row[j + 1]) : std::string_view{};
      if (cell.empty()) continue;
      const double v = parse_double(cell, "matrix cell (" + m.names[i] + ", " + m.names[j] + ")");
      if (!std::isfinite(v) || v < 0.0) throw DataError("matrix cell (" + m.names[i] + ", " + m.names[j] + ") is negative");
      m.values[i][j] = v;
      present[i][j] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (present[i][i] && m.values[i][i] > kSymmetryTolerance) {
      throw DataError("matrix diagonal entry for '" + m.names[i] + "' is nonzero");
    }
    m.values[i][i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool a = present[i][j], b = present[j][i];
      if (!a && !b) throw DataError("matrix pair (" + m.names[i] + ", " + m.names[j] + ") has no value");
      if (a && b) {
        if (std::fabs(m.values[i][j] - m.values[j][i]) > kSymmetryTolerance) {
          throw DataError("matrix is asymmetric at (" + m.names[i] + ", " + m.names[j] + "): " +
                          format_double(m.values[i][j]) + " vs " + format_double(m.values[j][i]));
        }
        const double avg = 0.5 * (m.values[i][j] + m.values[j][i]);
        m.values[i][j] = m.values[j][i] = avg;
      } else if (a) {
        m.values[j][i] = m.values[i][j];
      } else {
        m.values[i][j] = m.values[j][i];
      }
    }
  }
  return m;
}

std::string save_matrix_csv(const GeneticDistanceMatrix& m) {
  std::string out = "species";
  for (const auto& n : m.names) {
    if (n.find_first_of(",\n") != std::string::npos) throw DataError("species name '" + n + "' contains a comma");
    out += ',' + n;
  }
  out += '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += m.names[i];
    for (double v : m.values[i]) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

GeneticDistanceMatrix load_matrix_file(const std::string& path) { return load_matrix_csv(read_text_file(path)); }

void save_matrix_file(const GeneticDistanceMatrix& m, const std::string& path) {
  write_text_file(path, save_matrix_csv(m));
}

} // namespace mushroom
