#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pdatt {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Mask = std::vector<std::uint8_t>;

struct TreatmentPath {
  int d1 = 0;
  int d2 = 0;
  bool operator==(const TreatmentPath&) const = default;
  std::string label() const { return std::to_string(d1) + std::to_string(d2); }
};

// d' is always (0,0) here
struct EstimandSpec {
  TreatmentPath d{1, 1};
  TreatmentPath d_prime{0, 0};
  double level = 0.95;

  void validate() const;
  std::string label() const { return d.label() + "-" + d_prime.label(); }
};

// "11", "10", "01" (also accepts "11-00")
EstimandSpec spec_from_label(const std::string& label, double level = 0.95);
const std::vector<EstimandSpec>& all_specs();

struct ObservationRecord {
  double delta_y = 0.0;
  int s = 1;
  std::optional<int> d1;
  int d2 = 0;
  std::vector<double> x;
  std::optional<double> y2;
};

// Columnar and immutable. d1 is stored as -1 when s == 0 and every accessor
// checks s first, so nothing downstream can read a missing d1.
class PanelSample {
 public:
  PanelSample() = default;
  PanelSample(MatrixXd X, VectorXd dy, std::vector<std::uint8_t> s, std::vector<std::int8_t> d1,
              std::vector<std::uint8_t> d2, std::vector<std::string> column_names,
              std::optional<VectorXd> y2 = std::nullopt);

  static PanelSample from_records(const std::vector<ObservationRecord>& records,
                                  std::vector<std::string> column_names);

  int n() const { return static_cast<int>(dy_.size()); }
  int k() const { return static_cast<int>(X_.cols()); }
  const MatrixXd& X() const { return X_; }
  const VectorXd& dy() const { return dy_; }
  const std::optional<VectorXd>& y2() const { return y2_; }
  const std::vector<std::string>& column_names() const { return names_; }

  int s(int i) const { return s_[i]; }
  int d2(int i) const { return d2_[i]; }
  std::optional<int> d1(int i) const {
    if (!s_[i]) return std::nullopt;
    return d1_[i];
  }
  // S = 1 and D = p
  bool has_path(int i, TreatmentPath p) const {
    return s_[i] && d1_[i] == p.d1 && d2_[i] == p.d2;
  }

  Mask path_mask(TreatmentPath p) const;
  Mask d2_mask(int d2) const;
  Mask observed_d2_mask(int d2) const;  // S = 1 and D2 = d2
  Mask observed_mask() const;           // S = 1
  VectorXd s_vector() const;
  VectorXd d2_vector() const;

  ObservationRecord record(int i) const;
  PanelSample subset(const Mask& keep) const;
  PanelSample with_delta_y(VectorXd dy) const;

 private:
  MatrixXd X_;
  VectorXd dy_;
  std::vector<std::uint8_t> s_;
  std::vector<std::int8_t> d1_;
  std::vector<std::uint8_t> d2_;
  std::vector<std::string> names_;
  std::optional<VectorXd> y2_;
};

int count(const Mask& m);

// column mapping for load_csv; either delta_y or both y0 and y2
struct CsvSchema {
  std::string delta_y;
  std::string y0;
  std::string y2;
  std::string s;  // optional, must agree with d1 missingness
  std::string d1 = "d1";
  std::string d2 = "d2";
  std::vector<std::string> covariates;
};

PanelSample load_csv(const std::string& path, const CsvSchema& schema);

// unquoted header fields, as load_csv sees them
std::vector<std::string> read_csv_header(const std::string& path);

// Writes delta_y, s, d1, d2, (y2), then every covariate column. Shortest
// round-trip formatting, so reloading is bit-exact.
void write_csv(const PanelSample& sample, const std::string& path);
CsvSchema roundtrip_schema(const PanelSample& sample);

struct SampleSummary {
  int n = 0;
  int k = 0;
  double missing_rate = 0.0;
  // keys like "S=1,D1=1,D2=0" and "S=0,D2=1"
  std::map<std::string, int> cells;
  std::vector<std::string> empty_cells;
  std::vector<std::string> covariate_names;
  VectorXd covariate_mean;
  VectorXd covariate_var;
};

SampleSummary summarize(const PanelSample& sample);
std::string format_summary(const SampleSummary& s);

}  // namespace pdatt
