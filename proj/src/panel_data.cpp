#include "pdatt/panel_data.hpp"

#include <boost/tokenizer.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pdatt/errors.hpp"

namespace pdatt {

void EstimandSpec::validate() const {
  auto binary = [](int v) { return v == 0 || v == 1; };
  if (!binary(d.d1) || !binary(d.d2) || !binary(d_prime.d1) || !binary(d_prime.d2))
    throw ConfigError("panel_data", "treatment paths must be binary");
  if (!(d_prime == TreatmentPath{0, 0}))
    throw ConfigError("panel_data", "comparison path must be (0,0)");
  if (d == d_prime) throw ConfigError("panel_data", "target path equals the comparison path");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("panel_data", "level must lie in (0,1)");
}

EstimandSpec spec_from_label(const std::string& label, double level) {
  std::string l = label;
  if (l.size() == 5 && l.substr(2) == "-00") l = l.substr(0, 2);
  if (l.size() != 2 || (l[0] != '0' && l[0] != '1') || (l[1] != '0' && l[1] != '1'))
    throw ConfigError("panel_data", "bad pdatt label '" + label + "'");
  EstimandSpec s;
  s.d = {l[0] - '0', l[1] - '0'};
  s.level = level;
  s.validate();
  return s;
}

const std::vector<EstimandSpec>& all_specs() {
  static const std::vector<EstimandSpec> specs = {spec_from_label("11"), spec_from_label("10"),
                                                  spec_from_label("01")};
  return specs;
}

int count(const Mask& m) {
  int c = 0;
  for (auto v : m) c += v ? 1 : 0;
  return c;
}

PanelSample::PanelSample(MatrixXd X, VectorXd dy, std::vector<std::uint8_t> s,
                         std::vector<std::int8_t> d1, std::vector<std::uint8_t> d2,
                         std::vector<std::string> column_names, std::optional<VectorXd> y2)
    : X_(std::move(X)),
      dy_(std::move(dy)),
      s_(std::move(s)),
      d1_(std::move(d1)),
      d2_(std::move(d2)),
      names_(std::move(column_names)),
      y2_(std::move(y2)) {
  const auto n = static_cast<std::size_t>(dy_.size());
  if (n == 0) throw DataError("panel_data", "empty sample");
  if (static_cast<std::size_t>(X_.rows()) != n || s_.size() != n || d1_.size() != n ||
      d2_.size() != n)
    throw DataError("panel_data", "column lengths disagree");
  if (y2_ && static_cast<std::size_t>(y2_->size()) != n)
    throw DataError("panel_data", "y2 length disagrees");
  if (X_.cols() < 1) throw DataError("panel_data", "no covariate columns");
  if (names_.size() != static_cast<std::size_t>(X_.cols()))
    throw DataError("panel_data", "column_names must match covariate count");
  for (std::size_t i = 0; i < n; ++i) {
    if (X_(i, 0) != 1.0)
      throw DataError("panel_data", "record " + std::to_string(i) + ": x[0] must be 1");
    if (s_[i] > 1 || d2_[i] > 1)
      throw DataError("panel_data", "record " + std::to_string(i) + ": s/d2 must be binary");
    if (s_[i]) {
      if (d1_[i] != 0 && d1_[i] != 1)
        throw DataError("panel_data", "record " + std::to_string(i) + ": observed d1 must be binary");
    } else {
      d1_[i] = -1;
    }
  }
}

PanelSample PanelSample::from_records(const std::vector<ObservationRecord>& records,
                                      std::vector<std::string> column_names) {
  if (records.empty()) throw DataError("panel_data", "empty sample");
  const auto n = records.size();
  const auto k = records.front().x.size();
  const bool has_y2 = records.front().y2.has_value();
  MatrixXd X(n, k);
  VectorXd dy(n), y2(n);
  std::vector<std::uint8_t> s(n), d2(n);
  std::vector<std::int8_t> d1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (r.x.size() != k) throw DataError("panel_data", "record " + std::to_string(i) + ": covariate length");
    if (r.s != 0 && r.s != 1) throw DataError("panel_data", "record " + std::to_string(i) + ": s not binary");
    if (r.d1.has_value() != (r.s == 1))
      throw DataError("panel_data", "record " + std::to_string(i) + ": d1 present iff s = 1");
    if (r.y2.has_value() != has_y2) throw DataError("panel_data", "y2 present on some records only");
    for (std::size_t j = 0; j < k; ++j) X(i, j) = r.x[j];
    dy(i) = r.delta_y;
    s[i] = static_cast<std::uint8_t>(r.s);
    d1[i] = static_cast<std::int8_t>(r.d1.value_or(-1));
    if (r.d2 != 0 && r.d2 != 1) throw DataError("panel_data", "record " + std::to_string(i) + ": d2 not binary");
    d2[i] = static_cast<std::uint8_t>(r.d2);
    if (has_y2) y2(i) = *r.y2;
  }
  return PanelSample(std::move(X), std::move(dy), std::move(s), std::move(d1), std::move(d2),
                     std::move(column_names),
                     has_y2 ? std::optional<VectorXd>(std::move(y2)) : std::nullopt);
}

Mask PanelSample::path_mask(TreatmentPath p) const {
  Mask m(n());
  for (int i = 0; i < n(); ++i) m[i] = has_path(i, p);
  return m;
}

Mask PanelSample::d2_mask(int d2) const {
  Mask m(n());
  for (int i = 0; i < n(); ++i) m[i] = d2_[i] == d2;
  return m;
}

Mask PanelSample::observed_d2_mask(int d2) const {
  Mask m(n());
  for (int i = 0; i < n(); ++i) m[i] = s_[i] && d2_[i] == d2;
  return m;
}

Mask PanelSample::observed_mask() const {
  Mask m(n());
  for (int i = 0; i < n(); ++i) m[i] = s_[i];
  return m;
}

VectorXd PanelSample::s_vector() const {
  VectorXd v(n());
  for (int i = 0; i < n(); ++i) v(i) = s_[i];
  return v;
}

VectorXd PanelSample::d2_vector() const {
  VectorXd v(n());
  for (int i = 0; i < n(); ++i) v(i) = d2_[i];
  return v;
}

ObservationRecord PanelSample::record(int i) const {
  ObservationRecord r;
  r.delta_y = dy_(i);
  r.s = s_[i];
  r.d1 = d1(i);
  r.d2 = d2_[i];
  r.x.resize(k());
  for (int j = 0; j < k(); ++j) r.x[j] = X_(i, j);
  if (y2_) r.y2 = (*y2_)(i);
  return r;
}

PanelSample PanelSample::subset(const Mask& keep) const {
  const int m = count(keep);
  MatrixXd X(m, k());
  VectorXd dy(m), y2(m);
  std::vector<std::uint8_t> s(m), d2(m);
  std::vector<std::int8_t> d1(m);
  int r = 0;
  for (int i = 0; i < n(); ++i) {
    if (!keep[i]) continue;
    X.row(r) = X_.row(i);
    dy(r) = dy_(i);
    s[r] = s_[i];
    d1[r] = d1_[i];
    d2[r] = d2_[i];
    if (y2_) y2(r) = (*y2_)(i);
    ++r;
  }
  return PanelSample(std::move(X), std::move(dy), std::move(s), std::move(d1), std::move(d2), names_,
                     y2_ ? std::optional<VectorXd>(std::move(y2)) : std::nullopt);
}

PanelSample PanelSample::with_delta_y(VectorXd dy) const {
  return PanelSample(X_, std::move(dy), s_, d1_, d2_, names_, y2_);
}

// ---------------------------------------------------------------- csv

namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::vector<std::string> split_line(const std::string& line, long row) {
  std::vector<std::string> out;
  try {
    Tokenizer tok(line);
    for (const auto& t : tok) out.push_back(t);
  } catch (const boost::escaped_list_error& e) {
    throw ParseError(row, std::string("malformed field: ") + e.what());
  }
  for (auto& f : out) {
    auto b = f.find_first_not_of(" \t");
    auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& field, long row, const std::string& col) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  if (!field.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (field.empty() || ec != std::errc() || ptr != e)
    throw ParseError(row, "non-numeric value '" + field + "' in column " + col);
  return v;
}

bool is_missing_token(const std::string& f) {
  return f.empty() || f == "NA" || f == "NaN" || f == "nan" || f == "NAN";
}

int parse_binary(const std::string& field, long row, const std::string& col) {
  double v = parse_number(field, row, col);
  if (v != 0.0 && v != 1.0)
    throw DataError("panel_data", "row " + std::to_string(row) + ": column " + col + " must be 0/1, got " + field);
  return static_cast<int>(v);
}

}  // namespace

std::vector<std::string> read_csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("panel_data", "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel_data", "empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return split_line(line, 0);
}

PanelSample load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("panel_data", "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel_data", "empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_line(line, 0);

  auto index_of = [&](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("panel_data", "unmapped or absent column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };

  const bool use_delta = !schema.delta_y.empty();
  if (!use_delta && (schema.y0.empty() || schema.y2.empty()))
    throw ConfigError("panel_data", "map either delta_y or both y0 and y2");
  const int i_dy = use_delta ? index_of(schema.delta_y) : -1;
  const int i_y0 = schema.y0.empty() ? -1 : index_of(schema.y0);
  const int i_y2 = schema.y2.empty() ? -1 : index_of(schema.y2);
  const int i_s = schema.s.empty() ? -1 : index_of(schema.s);
  const int i_d1 = index_of(schema.d1);
  const int i_d2 = index_of(schema.d2);
  std::vector<int> i_x;
  for (const auto& c : schema.covariates) i_x.push_back(index_of(c));

  std::vector<ObservationRecord> recs;
  long row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++row;
    auto f = split_line(line, row);
    if (f.size() != header.size())
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                std::to_string(f.size()));
    ObservationRecord r;
    std::optional<double> y2;
    if (i_y2 >= 0) y2 = parse_number(f[i_y2], row, header[i_y2]);
    if (use_delta) {
      r.delta_y = parse_number(f[i_dy], row, header[i_dy]);
    } else {
      r.delta_y = *y2 - parse_number(f[i_y0], row, header[i_y0]);
    }
    r.y2 = y2;
    if (is_missing_token(f[i_d1])) {
      r.s = 0;
    } else {
      r.s = 1;
      r.d1 = parse_binary(f[i_d1], row, header[i_d1]);
    }
    if (i_s >= 0) {
      int s = parse_binary(f[i_s], row, header[i_s]);
      if (s != r.s)
        throw DataError("panel_data", "row " + std::to_string(row) + ": s column disagrees with d1 missingness");
    }
    r.d2 = parse_binary(f[i_d2], row, header[i_d2]);
    for (std::size_t j = 0; j < i_x.size(); ++j) r.x.push_back(parse_number(f[i_x[j]], row, header[i_x[j]]));
    recs.push_back(std::move(r));
  }
  if (recs.empty()) throw DataError("panel_data", "no data rows in " + path);

  // locate or prepend the constant column, and put it first
  std::vector<std::string> names = schema.covariates;
  int constant = -1;
  for (std::size_t j = 0; j < names.size() && constant < 0; ++j) {
    bool all_one = true;
    for (const auto& r : recs)
      if (r.x[j] != 1.0) {
        all_one = false;
        break;
      }
    if (all_one) constant = static_cast<int>(j);
  }
  if (constant < 0) {
    names.insert(names.begin(), "(intercept)");
    for (auto& r : recs) r.x.insert(r.x.begin(), 1.0);
  } else if (constant > 0) {
    std::rotate(names.begin(), names.begin() + constant, names.begin() + constant + 1);
    for (auto& r : recs) std::rotate(r.x.begin(), r.x.begin() + constant, r.x.begin() + constant + 1);
  }
  return PanelSample::from_records(recs, std::move(names));
}

namespace {
std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
}  // namespace

CsvSchema roundtrip_schema(const PanelSample& sample) {
  CsvSchema s;
  s.delta_y = "delta_y";
  s.s = "s";
  s.d1 = "d1";
  s.d2 = "d2";
  if (sample.y2()) s.y2 = "y2";
  for (const auto& c : sample.column_names()) s.covariates.push_back(c);
  return s;
}

void write_csv(const PanelSample& sample, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("panel_data", "cannot write " + path);
  out << "delta_y,s,d1,d2";
  if (sample.y2()) out << ",y2";
  for (const auto& c : sample.column_names()) out << ",\"" << c << "\"";
  out << '\n';
  for (int i = 0; i < sample.n(); ++i) {
    out << fmt_double(sample.dy()(i)) << ',' << sample.s(i) << ',';
    if (auto d1 = sample.d1(i)) out << *d1;
    else out << "NA";
    out << ',' << sample.d2(i);
    if (sample.y2()) out << ',' << fmt_double((*sample.y2())(i));
    for (int j = 0; j < sample.k(); ++j) out << ',' << fmt_double(sample.X()(i, j));
    out << '\n';
  }
}

// ---------------------------------------------------------------- summary

SampleSummary summarize(const PanelSample& sample) {
  SampleSummary out;
  out.n = sample.n();
  out.k = sample.k();
  int missing = 0;
  for (int d1 : {0, 1})
    for (int d2 : {0, 1})
      out.cells["S=1,D1=" + std::to_string(d1) + ",D2=" + std::to_string(d2)] = 0;
  out.cells["S=0,D2=0"] = 0;
  out.cells["S=0,D2=1"] = 0;
  for (int i = 0; i < sample.n(); ++i) {
    if (auto d1 = sample.d1(i)) {
      out.cells["S=1,D1=" + std::to_string(*d1) + ",D2=" + std::to_string(sample.d2(i))]++;
    } else {
      ++missing;
      out.cells["S=0,D2=" + std::to_string(sample.d2(i))]++;
    }
  }
  out.missing_rate = static_cast<double>(missing) / sample.n();
  for (const auto& [key, c] : out.cells)
    if (c == 0 && key.rfind("S=1", 0) == 0) out.empty_cells.push_back(key);
  out.covariate_names = sample.column_names();
  out.covariate_mean = sample.X().colwise().mean().transpose();
  out.covariate_var = VectorXd::Zero(sample.k());
  if (sample.n() > 1) {
    for (int j = 0; j < sample.k(); ++j) {
      auto c = sample.X().col(j).array() - out.covariate_mean(j);
      out.covariate_var(j) = c.square().sum() / (sample.n() - 1);
    }
  }
  return out;
}

std::string format_summary(const SampleSummary& s) {
  std::ostringstream o;
  o << "n=" << s.n << " k=" << s.k << " missing_rate=" << s.missing_rate << '\n';
  for (const auto& [key, c] : s.cells) o << "  " << key << ": " << c << '\n';
  for (const auto& e : s.empty_cells) o << "  EMPTY " << e << '\n';
  for (int j = 0; j < s.k; ++j)
    o << "  " << s.covariate_names[j] << " mean=" << s.covariate_mean(j) << " var=" << s.covariate_var(j) << '\n';
  return o.str();
}

}  // namespace pdatt
