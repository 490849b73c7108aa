#pragma once

#include "apportion/model_core.hpp"
#include "apportion/simulation.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace apportion::io {

struct CsvTable {
  std::string source;  // path or label used in error messages
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& source);

// Empty cell means missing. "NaN", "inf" and anything not fully numeric are rejected.
std::optional<double> parse_cell(const std::string& cell, const std::string& where);
double parse_number(const std::string& text, const std::string& where);

// %.17g, enough to round-trip every double exactly.
std::string format_double(double v);

// Feature id used for an excitation/emission grid point, e.g. "240:300".
std::string eem_feature_id(double excitation_nm, double emission_nm);
// Excitation wavelength encoded in an "ex:em" feature id.
std::optional<double> excitation_of(const std::string& feature_id);

struct LoadedDictionary {
  Dictionary dictionary;
  SourceDesign design;
};

// Wide matrix (`feature_id,<profile ids>`) or long-form EEM
// (`profile_id,excitation_nm,emission_nm,intensity`), picked from the header.
// The labels file is `profile_id,source` or `profile_id,<one weight column per
// category>`; dictionary columns follow label-row order.
LoadedDictionary load_dictionary(const std::filesystem::path& matrix,
                                 const std::filesystem::path& labels);

// Sample aligned to the dictionary features by id. Features the sample does
// not mention, or leaves empty, are unobserved.
Profile load_sample(const std::filesystem::path& path, const std::vector<std::string>& feature_ids);

void write_dictionary(const std::filesystem::path& path, const Dictionary& x);
void write_labels(const std::filesystem::path& path, const Dictionary& x, const SourceDesign& a);
void write_profile(const std::filesystem::path& path, const Profile& y);

// Feature ids listed one per line (optional `feature_id` header).
std::vector<std::string> read_feature_list(const std::filesystem::path& path);

std::vector<double> parse_number_list(const std::string& text, const std::string& where);

// Simulation config: `key = value` lines, `#` starts a comment.
struct SimulationConfig {
  ExperimentConfig experiment;
  SyntheticEemConfig generator;
  std::vector<double> mask_excitation;
  std::optional<std::filesystem::path> dictionary_path;
  std::optional<std::filesystem::path> labels_path;
};

SimulationConfig parse_simulation_config(const std::string& text, const std::string& source);
SimulationConfig read_simulation_config(const std::filesystem::path& path);

// Indices of features whose excitation matches one of the listed wavelengths.
std::vector<Index> excitation_mask(const std::vector<std::string>& feature_ids,
                                   const std::vector<double>& excitations);

void write_report_csv(std::ostream& out, const ExperimentResult& result,
                      const std::vector<std::string>& category_names);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

}  // namespace apportion::io
