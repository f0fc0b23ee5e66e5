#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mushroom {

struct SequenceRecord {
  std::string name;
  std::string sequence; // uppercase over A,C,G,T,-,N
};

/// Pre-aligned sequences: equal lengths, unique names.
struct AlignedSequenceSet {
  std::vector<SequenceRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t length() const { return records.empty() ? 0 : records.front().sequence.size(); }
};

AlignedSequenceSet parse_fasta(std::string_view text);
std::string emit_fasta(const AlignedSequenceSet& seqs, std::size_t line_width = 60);
AlignedSequenceSet load_fasta(const std::string& path);

/// Mismatch fraction over sites where neither sequence has '-' or 'N'.
double p_distance(std::string_view a, std::string_view b);
/// -3/4 ln(1 - 4p/3).
double jc69_from_p(double p);
double jc69_distance(std::string_view a, std::string_view b);
/// Tamura-Nei distance with base frequencies pooled over the pair's compared sites.
double tn93_distance(std::string_view a, std::string_view b);

enum class DistanceModel { P, JC69, TN93 };
std::string_view distance_model_name(DistanceModel m);
DistanceModel parse_distance_model(std::string_view name);
double pairwise_distance(std::string_view a, std::string_view b, DistanceModel model);

struct GeneticDistanceMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return names.size(); }
  std::size_t index_of(std::string_view name) const;
  double at(std::size_t i, std::size_t j) const { return values[i][j]; }
  double between(std::string_view a, std::string_view b) const { return values[index_of(a)][index_of(b)]; }
};

GeneticDistanceMatrix distance_matrix(const AlignedSequenceSet& seqs, DistanceModel model);

/// Per-entry sample standard deviation of the distance over `reps` column
/// resamples of the alignment.
GeneticDistanceMatrix bootstrap_uncertainty(const AlignedSequenceSet& seqs, DistanceModel model, int reps,
                                            std::uint64_t seed);
/// Same, with the column index lists supplied by the caller.
GeneticDistanceMatrix bootstrap_uncertainty(const AlignedSequenceSet& seqs, DistanceModel model,
                                            const std::vector<std::vector<std::size_t>>& resamples);

/// `species,<names>` header then one row per species. Lines starting with '#'
/// are comments. Blank upper-triangle cells are filled from the transpose.
GeneticDistanceMatrix load_matrix_csv(std::string_view text);
std::string save_matrix_csv(const GeneticDistanceMatrix& m);
GeneticDistanceMatrix load_matrix_file(const std::string& path);
void save_matrix_file(const GeneticDistanceMatrix& m, const std::string& path);

} // namespace mushroom
