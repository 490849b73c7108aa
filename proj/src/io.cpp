#include "apportion/io.hpp"

#include "apportion/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace apportion::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw ValidationError(where + ": unterminated quoted field");
  out.push_back(trim(field));
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class Int>
Int parse_integer(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  Int v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ValidationError(where + ": '" + text + "' is not a valid integer");
  }
  return v;
}

// Rows hold optional values; missing entries are later removed by the shared-support rule.
struct RawMatrix {
  std::vector<std::string> feature_ids;
  std::vector<std::string> profile_ids;
  std::vector<std::vector<std::optional<double>>> cells;  // [feature][profile]
};

void require_unique(const std::vector<std::string>& ids, const std::string& what,
                    const std::string& source) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) throw ValidationError(source + ": empty " + what);
    if (!seen.insert(id).second) throw ValidationError(source + ": duplicate " + what + " '" + id + "'");
  }
}

RawMatrix read_wide(const CsvTable& t) {
  if (t.header.empty() || t.header[0] != "feature_id") {
    throw ValidationError(t.source + ": first header column must be 'feature_id'");
  }
  RawMatrix m;
  m.profile_ids.assign(t.header.begin() + 1, t.header.end());
  if (m.profile_ids.empty()) throw ValidationError(t.source + ": no profile columns");
  require_unique(m.profile_ids, "profile id", t.source);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    m.feature_ids.push_back(row[0]);
    std::vector<std::optional<double>> cells;
    for (std::size_t c = 1; c < row.size(); ++c) {
      cells.push_back(parse_cell(row[c], t.source + " row " + std::to_string(r + 2) + " ('" + row[0] +
                                             "'), column '" + t.header[c] + "'"));
    }
    m.cells.push_back(std::move(cells));
  }
  require_unique(m.feature_ids, "feature id", t.source);
  return m;
}

std::size_t column_index(const CsvTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ValidationError(t.source + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

bool is_long_form(const CsvTable& t) {
  return std::find(t.header.begin(), t.header.end(), "excitation_nm") != t.header.end();
}

struct EemEntry {
  double excitation;
  double emission;
  std::optional<double> intensity;
};

struct GridKey {
  double excitation;
  double emission;
  bool operator<(const GridKey& o) const {
    return excitation != o.excitation ? excitation < o.excitation : emission < o.emission;
  }
};

// profile id -> (grid point -> intensity), profiles in first-appearance order.
std::vector<std::pair<std::string, std::map<GridKey, std::optional<double>>>> read_long(
    const CsvTable& t, bool require_profile_column) {
  const std::size_t ex_col = column_index(t, "excitation_nm");
  const std::size_t em_col = column_index(t, "emission_nm");
  const std::size_t in_col = column_index(t, "intensity");
  const bool has_profile =
      std::find(t.header.begin(), t.header.end(), "profile_id") != t.header.end();
  if (require_profile_column && !has_profile) {
    throw ValidationError(t.source + ": missing column 'profile_id'");
  }
  const std::size_t id_col = has_profile ? column_index(t, "profile_id") : 0;

  std::vector<std::pair<std::string, std::map<GridKey, std::optional<double>>>> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = t.source + " row " + std::to_string(r + 2);
    const std::string id = has_profile ? row[id_col] : std::string("sample");
    if (id.empty()) throw ValidationError(where + ": empty profile_id");
    const GridKey key{parse_number(row[ex_col], where + ", excitation_nm"),
                      parse_number(row[em_col], where + ", emission_nm")};
    const auto value = parse_cell(row[in_col], where + ", intensity");
    auto [it, fresh] = index.try_emplace(id, out.size());
    if (fresh) out.emplace_back(id, std::map<GridKey, std::optional<double>>{});
    auto& grid = out[it->second].second;
    if (!grid.emplace(key, value).second) {
      throw ValidationError(where + ": duplicate (excitation, emission) pair (" +
                            format_double(key.excitation) + ", " + format_double(key.emission) +
                            ") for profile '" + id + "'");
    }
  }
  return out;
}

RawMatrix long_to_raw(const CsvTable& t) {
  const auto profiles = read_long(t, true);
  std::set<GridKey> grid;
  for (const auto& [id, cells] : profiles)
    for (const auto& [key, v] : cells) grid.insert(key);
  RawMatrix m;
  for (const auto& [id, cells] : profiles) m.profile_ids.push_back(id);
  for (const GridKey& key : grid) {
    m.feature_ids.push_back(eem_feature_id(key.excitation, key.emission));
    std::vector<std::optional<double>> row;
    for (const auto& [id, cells] : profiles) {
      const auto it = cells.find(key);
      row.push_back(it == cells.end() ? std::nullopt : it->second);
    }
    m.cells.push_back(std::move(row));
  }
  return m;
}

struct Labels {
  std::vector<std::string> profile_ids;
  std::vector<std::string> category_names;
  std::optional<std::vector<std::string>> categorical;
  std::vector<WeightRow> weights;
};

Labels read_labels(const CsvTable& t) {
  if (t.header.size() < 2 || t.header[0] != "profile_id") {
    throw ValidationError(t.source + ": header must be 'profile_id,source' or 'profile_id,<categories>'");
  }
  Labels l;
  for (const auto& row : t.rows) l.profile_ids.push_back(row[0]);
  require_unique(l.profile_ids, "profile id", t.source);
  if (t.header.size() == 2 && t.header[1] == "source") {
    std::vector<std::string> labels;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string& s = t.rows[r][1];
      if (s.empty()) {
        throw ValidationError(t.source + " row " + std::to_string(r + 2) + ": empty source label");
      }
      labels.push_back(s);
      if (std::find(l.category_names.begin(), l.category_names.end(), s) == l.category_names.end())
        l.category_names.push_back(s);
    }
    l.categorical = std::move(labels);
  } else {
    l.category_names.assign(t.header.begin() + 1, t.header.end());
    require_unique(l.category_names, "category", t.source);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      WeightRow w;
      for (std::size_t c = 1; c < t.header.size(); ++c) {
        w.push_back(parse_number(t.rows[r][c], t.source + " row " + std::to_string(r + 2) +
                                                   ", column '" + t.header[c] + "'"));
      }
      l.weights.push_back(std::move(w));
    }
  }
  return l;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, source + " line " + std::to_string(line_no));
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ValidationError(source + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ValidationError(source + ": empty file");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text(path), path.string());
}

std::optional<double> parse_cell(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  return parse_number(t, where);
}

double parse_number(const std::string& text, const std::string& where) {
  std::string t = trim(text);
  if (!t.empty() && t[0] == '+') t.erase(0, 1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ValidationError(where + ": '" + text + "' is not a finite number");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string eem_feature_id(double excitation_nm, double emission_nm) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, excitation_nm);
  *r.ptr++ = ':';
  r = std::to_chars(r.ptr, buf + sizeof buf, emission_nm);
  return std::string(buf, r.ptr);
}

std::optional<double> excitation_of(const std::string& feature_id) {
  const auto colon = feature_id.find(':');
  if (colon == std::string::npos) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(feature_id.data(), feature_id.data() + colon, v);
  if (ec != std::errc{} || ptr != feature_id.data() + colon) return std::nullopt;
  return v;
}

LoadedDictionary load_dictionary(const std::filesystem::path& matrix_path,
                                 const std::filesystem::path& labels_path) {
  const CsvTable table = read_csv(matrix_path);
  const RawMatrix raw = is_long_form(table) ? long_to_raw(table) : read_wide(table);
  const Labels labels = read_labels(read_csv(labels_path));

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < raw.profile_ids.size(); ++j) column.emplace(raw.profile_ids[j], j);
  for (const auto& id : labels.profile_ids) {
    if (!column.count(id)) {
      throw ValidationError(labels_path.string() + ": profile '" + id + "' is not in the dictionary " +
                            matrix_path.string());
    }
  }
  if (labels.profile_ids.size() != raw.profile_ids.size()) {
    std::set<std::string> labelled(labels.profile_ids.begin(), labels.profile_ids.end());
    for (const auto& id : raw.profile_ids) {
      if (!labelled.count(id)) {
        throw ValidationError(labels_path.string() + ": no label for dictionary profile '" + id + "'");
      }
    }
  }

  // Shared support: a feature missing in any profile is dropped everywhere.
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < raw.feature_ids.size(); ++f) {
    const auto& row = raw.cells[f];
    if (std::all_of(row.begin(), row.end(), [](const auto& c) { return c.has_value(); })) kept.push_back(f);
  }
  const auto p = static_cast<Index>(kept.size());
  const auto n = static_cast<Index>(labels.profile_ids.size());
  if (n >= p) {
    throw ValidationError(matrix_path.string() + ": need more features than profiles (p = " +
                          std::to_string(p) + " after dropping incomplete features, n = " +
                          std::to_string(n) + ")");
  }
  Matrix values(p, n);
  std::vector<std::string> feature_ids;
  for (Index i = 0; i < p; ++i) {
    const auto f = kept[static_cast<std::size_t>(i)];
    feature_ids.push_back(raw.feature_ids[f]);
    for (Index j = 0; j < n; ++j) {
      values(i, j) = *raw.cells[f][column.at(labels.profile_ids[static_cast<std::size_t>(j)])];
    }
  }
  Dictionary dict(std::move(values), std::move(feature_ids), labels.profile_ids);
  SourceDesign design = labels.categorical ? build_design(*labels.categorical, labels.category_names)
                                           : build_design(labels.weights, labels.category_names);
  return LoadedDictionary{std::move(dict), std::move(design)};
}

Profile load_sample(const std::filesystem::path& path, const std::vector<std::string>& feature_ids) {
  const CsvTable t = read_csv(path);
  std::unordered_map<std::string, std::optional<double>> given;
  bool drop_unknown = false;
  if (is_long_form(t)) {
    const auto profiles = read_long(t, false);
    if (profiles.size() != 1) {
      throw ValidationError(path.string() + ": expected a single sample, found " +
                            std::to_string(profiles.size()) + " profile ids");
    }
    for (const auto& [key, v] : profiles.front().second) {
      given.emplace(eem_feature_id(key.excitation, key.emission), v);
    }
    // Grid points outside the dictionary's shared support are dropped, as for the dictionary.
    drop_unknown = true;
  } else {
    if (t.header.size() != 2 || t.header[0] != "feature_id") {
      throw ValidationError(path.string() + ": sample header must be 'feature_id,<value column>'");
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::string where = path.string() + " row " + std::to_string(r + 2) + " ('" + row[0] + "')";
      if (!given.emplace(row[0], parse_cell(row[1], where)).second) {
        throw ValidationError(where + ": duplicate feature id");
      }
    }
  }
  if (!drop_unknown) {
    std::set<std::string> known(feature_ids.begin(), feature_ids.end());
    for (const auto& [id, v] : given) {
      if (!known.count(id)) {
        throw ValidationError(path.string() + ": feature '" + id + "' is not a dictionary feature");
      }
    }
  }
  Profile y;
  y.feature_ids = feature_ids;
  y.values = Vector::Zero(static_cast<Index>(feature_ids.size()));
  y.observed.assign(feature_ids.size(), false);
  for (std::size_t i = 0; i < feature_ids.size(); ++i) {
    const auto it = given.find(feature_ids[i]);
    if (it != given.end() && it->second) {
      y.values(static_cast<Index>(i)) = *it->second;
      y.observed[i] = true;
    }
  }
  if (y.observed_count() == 0) throw ValidationError(path.string() + ": no observed dictionary features");
  return y;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_dictionary(const std::filesystem::path& path, const Dictionary& x) {
  std::string s = "feature_id";
  for (const auto& id : x.profile_ids()) s += "," + id;
  s += '\n';
  for (Index i = 0; i < x.features(); ++i) {
    s += x.feature_ids()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < x.profiles(); ++j) s += "," + format_double(x.values()(i, j));
    s += '\n';
  }
  write_file(path, s);
}

void write_labels(const std::filesystem::path& path, const Dictionary& x, const SourceDesign& a) {
  std::string s;
  if (a.is_indicator()) {
    s = "profile_id,source\n";
    for (Index i = 0; i < a.profiles(); ++i) {
      s += x.profile_ids()[static_cast<std::size_t>(i)] + "," +
           a.category_names()[static_cast<std::size_t>(*a.category_of(i))] + "\n";
    }
  } else {
    s = "profile_id";
    for (const auto& c : a.category_names()) s += "," + c;
    s += '\n';
    for (Index i = 0; i < a.profiles(); ++i) {
      s += x.profile_ids()[static_cast<std::size_t>(i)];
      for (Index k = 0; k < a.categories(); ++k) s += "," + format_double(a.weights()(i, k));
      s += '\n';
    }
  }
  write_file(path, s);
}

void write_profile(const std::filesystem::path& path, const Profile& y) {
  std::string s = "feature_id,value\n";
  for (Index i = 0; i < y.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    s += (u < y.feature_ids.size() ? y.feature_ids[u] : "f" + std::to_string(i + 1)) + ",";
    if (y.observed[u]) s += format_double(y.values(i));
    s += '\n';
  }
  write_file(path, s);
}

std::vector<std::string> read_feature_list(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = trim(line);
    if (line.empty() || (ids.empty() && line == "feature_id")) continue;
    ids.push_back(line);
  }
  return ids;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& where) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (trim(item).empty()) throw ValidationError(where + ": empty list entry in '" + text + "'");
    out.push_back(parse_number(item, where));
  }
  if (out.empty()) throw ValidationError(where + ": empty list");
  return out;
}

SimulationConfig parse_simulation_config(const std::string& text, const std::string& source) {
  SimulationConfig c;
  std::optional<Index> p;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty() && line.back() == '\r') line = trim(line.substr(0, line.size() - 1));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + " line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ValidationError(where + ": duplicate key '" + key + "'");
    const std::string at = where + " (" + key + ")";
    auto& e = c.experiment;
    auto& g = c.generator;
    if (key == "mode") {
      e.mode = parse_experiment_mode(value);
    } else if (key == "p") {
      p = parse_integer<Index>(value, at);
    } else if (key == "n_per_category") {
      g.per_category = parse_integer<Index>(value, at);
    } else if (key == "K") {
      g.categories = parse_integer<Index>(value, at);
    } else if (key == "alphas") {
      e.alphas = parse_number_list(value, at);
    } else if (key == "theta_count") {
      e.theta_count = parse_integer<Index>(value, at);
    } else if (key == "replicates") {
      e.replicates = parse_integer<Index>(value, at);
    } else if (key == "seed") {
      e.seed = parse_integer<std::uint64_t>(value, at);
      g.seed = e.seed;
    } else if (key == "mask_excitation") {
      c.mask_excitation = parse_number_list(value, at);
    } else if (key == "nu_floor") {
      e.nu_floor = parse_number(value, at);
    } else if (key == "excitations") {
      g.excitations = parse_integer<Index>(value, at);
    } else if (key == "factors") {
      g.factors = parse_integer<Index>(value, at);
    } else if (key == "noise_sd") {
      g.noise_sd = parse_number(value, at);
    } else if (key == "variation_scale") {
      g.variation_scale = parse_number(value, at);
    } else if (key == "noise_scale") {
      e.noise_scale = parse_number(value, at);
    } else if (key == "threads") {
      e.threads = parse_integer<unsigned>(value, at);
    } else if (key == "dictionary") {
      c.dictionary_path = value;
    } else if (key == "labels") {
      c.labels_path = value;
    } else {
      throw ValidationError(where + ": unknown key '" + key + "'");
    }
  }
  if (c.dictionary_path.has_value() != c.labels_path.has_value()) {
    throw ValidationError(source + ": 'dictionary' and 'labels' must be given together");
  }
  if (p) {
    if (c.dictionary_path) throw ValidationError(source + ": 'p' applies only to the synthetic dictionary");
    if (c.generator.excitations < 1 || *p % c.generator.excitations != 0) {
      throw ValidationError(source + ": p = " + std::to_string(*p) +
                            " is not a multiple of excitations = " +
                            std::to_string(c.generator.excitations));
    }
    c.generator.emissions = *p / c.generator.excitations;
  }
  if (c.experiment.noise_scale < 0.0) throw ValidationError(source + ": noise_scale must be >= 0");
  if (c.experiment.mode == ExperimentMode::Prediction && c.mask_excitation.empty()) {
    throw ValidationError(source + ": prediction mode needs mask_excitation");
  }
  return c;
}

SimulationConfig read_simulation_config(const std::filesystem::path& path) {
  return parse_simulation_config(read_text(path), path.string());
}

std::vector<Index> excitation_mask(const std::vector<std::string>& feature_ids,
                                   const std::vector<double>& excitations) {
  std::vector<Index> out;
  std::vector<bool> used(excitations.size(), false);
  for (std::size_t i = 0; i < feature_ids.size(); ++i) {
    const auto ex = excitation_of(feature_ids[i]);
    if (!ex) continue;
    for (std::size_t w = 0; w < excitations.size(); ++w) {
      if (std::abs(*ex - excitations[w]) <= 1e-9 * std::max(1.0, std::abs(excitations[w]))) {
        out.push_back(static_cast<Index>(i));
        used[w] = true;
        break;
      }
    }
  }
  for (std::size_t w = 0; w < excitations.size(); ++w) {
    if (!used[w]) {
      throw ValidationError("mask excitation " + format_double(excitations[w]) +
                            " nm matches no dictionary feature (ids must look like 'ex:em')");
    }
  }
  return out;
}

void write_report_csv(std::ostream& out, const ExperimentResult& result,
                      const std::vector<std::string>& category_names) {
  out << "alpha,theta_id,method,category,metric,value,mc_se,replicates,seed\n";
  for (const ReportRow& r : result.rows) {
    out << format_double(r.alpha) << ',' << r.theta_id << ',' << r.method << ',';
    if (r.category >= 0) out << category_names[static_cast<std::size_t>(r.category)];
    out << ',' << r.metric << ',' << format_double(r.value) << ',' << format_double(r.mc_se) << ','
        << r.replicates << ',' << r.seed << '\n';
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[digest[i] >> 4];
    s += hex[digest[i] & 15];
  }
  return s;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

}  // namespace apportion::io
