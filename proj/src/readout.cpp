#include "stretchcap/readout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

namespace stretchcap {

ExtraPolicy ExtraPolicy::parse(const std::string& text) {
  if (text == "single+pairs" || text == "pairs+single") return {true, true};
  if (text == "single") return {true, false};
  if (text == "pairs") return {false, true};
  if (text == "none") return {false, false};
  throw std::invalid_argument("unknown extra-row policy '" + text + "' (single+pairs, single, pairs, none)");
}

std::string ExtraPolicy::to_string() const {
  if (single_strip && pairs_same_layer) return "single+pairs";
  if (single_strip) return "single";
  if (pairs_same_layer) return "pairs";
  return "none";
}

int MeasurementPlan::num_mandatory() const {
  return static_cast<int>(std::count(row_kind.begin(), row_kind.end(), RowKind::Mandatory));
}

std::string cell_name(const SensorLayout& layout, const SensorCell& cell) {
  return layout.strips[static_cast<std::size_t>(cell.top_strip)].id +
         layout.strips[static_cast<std::size_t>(cell.bottom_strip)].id;
}

std::vector<int> cells_for_combination(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                       const std::vector<std::string>& sources) {
  std::vector<char> is_source(layout.strips.size(), 0);
  for (const auto& id : sources) {
    const int idx = layout.strip_index(id);
    if (idx < 0) throw LayoutError("unknown strip id " + id);
    is_source[static_cast<std::size_t>(idx)] = 1;
  }
  std::vector<int> out;
  for (const auto& c : cells)
    if (is_source[static_cast<std::size_t>(c.top_strip)] != is_source[static_cast<std::size_t>(c.bottom_strip)])
      out.push_back(c.id);
  return out;
}

namespace {

Eigen::VectorXd indicator(const std::vector<int>& ids, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (int i : ids) v[i] = 1.0;
  return v;
}

// Incremental orthonormal basis for independence tests.
class SpanTracker {
 public:
  explicit SpanTracker(int dim) : dim_(dim) {}

  int size() const { return static_cast<int>(basis_.size()); }

  /// Residual of v after projecting out the current span (two passes of
  /// modified Gram-Schmidt).
  Eigen::VectorXd residual(const Eigen::VectorXd& v) const {
    Eigen::VectorXd r = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis_) r -= q.dot(r) * q;
    return r;
  }

  bool independent(const Eigen::VectorXd& v) const {
    const double n = v.norm();
    return n > 0.0 && residual(v).norm() > 1e-9 * n;
  }

  bool add(const Eigen::VectorXd& v) {
    if (!independent(v)) return false;
    const Eigen::VectorXd r = residual(v);
    basis_.push_back(r / r.norm());
    return true;
  }

  bool full() const { return size() >= dim_; }

 private:
  int dim_;
  std::vector<Eigen::VectorXd> basis_;
};

std::vector<std::string> strip_ids(const SensorLayout& layout, Layer layer) {
  std::vector<std::string> out;
  for (const auto& s : layout.strips)
    if (s.layer == layer) out.push_back(s.id);
  return out;
}

// Smallest set of accepted rows that, with `candidate`, is linearly dependent.
std::vector<int> dependent_subset(const std::vector<Eigen::VectorXd>& accepted, const Eigen::VectorXd& candidate,
                                  int candidate_index, const std::vector<int>& accepted_index) {
  Eigen::MatrixXd a(candidate.size(), static_cast<Eigen::Index>(accepted.size()));
  for (std::size_t i = 0; i < accepted.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = accepted[i];
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(candidate);
  std::vector<int> subset;
  for (Eigen::Index i = 0; i < coef.size(); ++i)
    if (std::abs(coef[i]) > 1e-9) subset.push_back(accepted_index[static_cast<std::size_t>(i)]);
  subset.push_back(candidate_index);
  std::sort(subset.begin(), subset.end());
  return subset;
}

std::string describe_rows(const std::vector<PlanRow>& rows, const std::vector<int>& subset) {
  std::string out;
  for (int r : subset) {
    if (!out.empty()) out += ", ";
    out += "{";
    for (std::size_t k = 0; k < rows[static_cast<std::size_t>(r)].sources.size(); ++k)
      out += (k ? "," : "") + rows[static_cast<std::size_t>(r)].sources[k];
    out += "}";
  }
  return out;
}

}  // namespace

std::vector<PlanRow> build_mandatory(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                     MandatoryPolicy policy) {
  const int s = static_cast<int>(cells.size());
  if (s == 0) throw LayoutError("layout has no cells");
  std::vector<PlanRow> pairs;
  for (const auto& c : cells) {
    PlanRow row;
    row.sources = {layout.strips[static_cast<std::size_t>(c.top_strip)].id,
                   layout.strips[static_cast<std::size_t>(c.bottom_strip)].id};
    row.cells = cells_for_combination(layout, cells, row.sources);
    pairs.push_back(std::move(row));
  }

  SpanTracker span(s);
  std::vector<PlanRow> out;
  if (policy == MandatoryPolicy::PairsOnly) {
    std::vector<Eigen::VectorXd> accepted;
    std::vector<int> accepted_index;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Eigen::VectorXd v = indicator(pairs[i].cells, s);
      if (!span.add(v)) {
        const auto subset = v.norm() == 0.0 ? std::vector<int>{static_cast<int>(i)}
                                            : dependent_subset(accepted, v, static_cast<int>(i), accepted_index);
        throw RankError("pair measurements are rank deficient; dependent rows: " + describe_rows(pairs, subset),
                        subset);
      }
      accepted.push_back(v);
      accepted_index.push_back(static_cast<int>(i));
    }
    return pairs;
  }

  auto try_add = [&](std::vector<std::string> sources) {
    if (span.full()) return;
    auto ids = cells_for_combination(layout, cells, sources);
    if (span.add(indicator(ids, s))) out.push_back({std::move(sources), std::move(ids), RowKind::Mandatory});
  };
  for (auto& row : pairs) try_add(row.sources);

  const auto tops = strip_ids(layout, Layer::Top);
  const auto bottoms = strip_ids(layout, Layer::Bottom);
  for (const auto& t : tops)
    for (std::size_t a = 0; a < bottoms.size(); ++a)
      for (std::size_t b = a + 1; b < bottoms.size(); ++b) try_add({t, bottoms[a], bottoms[b]});
  for (const auto& bt : bottoms)
    for (std::size_t a = 0; a < tops.size(); ++a)
      for (std::size_t b = a + 1; b < tops.size(); ++b) try_add({tops[a], tops[b], bt});
  for (const auto* layer : {&tops, &bottoms})
    for (std::size_t a = 0; a < layer->size(); ++a)
      for (std::size_t b = a + 1; b < layer->size(); ++b) try_add({(*layer)[a], (*layer)[b]});
  for (const auto& strip : layout.strips) try_add({strip.id});

  if (!span.full())
    throw RankError("cannot build " + std::to_string(s) + " independent measurements; only " +
                        std::to_string(span.size()) + " reachable",
                    {});
  return out;
}

std::vector<PlanRow> build_extra(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                 const std::vector<PlanRow>& existing, const ExtraPolicy& policy) {
  std::set<std::vector<int>> seen;
  for (const auto& r : existing) seen.insert(r.cells);
  std::vector<PlanRow> out;
  auto try_add = [&](std::vector<std::string> sources) {
    auto ids = cells_for_combination(layout, cells, sources);
    if (ids.empty() || !seen.insert(ids).second) return;
    out.push_back({std::move(sources), std::move(ids), RowKind::Extra});
  };
  if (policy.single_strip)
    for (const auto& strip : layout.strips) try_add({strip.id});
  if (policy.pairs_same_layer) {
    for (Layer layer : {Layer::Top, Layer::Bottom}) {
      const auto ids = strip_ids(layout, layer);
      for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t b = a + 1; b < ids.size(); ++b) try_add({ids[a], ids[b]});
    }
  }
  return out;
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
  return Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
}

namespace {

Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& m) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() ? sv[0] : 0.0);
  Eigen::VectorXd inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) inv[i] = sv[i] > cutoff ? 1.0 / sv[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

void check_mandatory_rank(const MeasurementPlan& plan) {
  const int s = plan.num_cells();
  Eigen::MatrixXd mand(plan.num_mandatory(), s);
  int r = 0;
  for (int i = 0; i < plan.num_rows(); ++i)
    if (plan.row_kind[static_cast<std::size_t>(i)] == RowKind::Mandatory) mand.row(r++) = plan.matrix.row(i);
  if (mand.rows() != s)
    throw RankError("mandatory block has " + std::to_string(mand.rows()) + " rows for " + std::to_string(s) +
                        " cells",
                    {});
  const auto sv = singular_values(mand);
  if (!(sv[sv.size() - 1] > 1e-8 * sv[0]))
    throw RankError("mandatory block is rank deficient (condition " + format_double(sv[0] / sv[sv.size() - 1]) + ")",
                    {});
}

}  // namespace

MeasurementPlan make_plan(const std::vector<PlanRow>& rows, const std::vector<std::string>& cell_names) {
  MeasurementPlan plan;
  const int s = static_cast<int>(cell_names.size());
  plan.cell_names = cell_names;
  plan.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c : rows[i].cells) {
      if (c < 0 || c >= s) throw std::out_of_range("plan row references cell " + std::to_string(c));
      plan.matrix(static_cast<Eigen::Index>(i), c) = 1.0;
    }
    plan.row_kind.push_back(rows[i].kind);
    plan.source_sets.push_back(rows[i].sources);
  }
  check_mandatory_rank(plan);
  plan.pseudoinverse = pseudoinverse(plan.matrix);
  return plan;
}

MeasurementPlan MeasurementPlan::mandatory_only() const {
  std::vector<PlanRow> rows;
  for (int i = 0; i < num_rows(); ++i) {
    if (row_kind[static_cast<std::size_t>(i)] != RowKind::Mandatory) continue;
    PlanRow row{source_sets[static_cast<std::size_t>(i)], {}, RowKind::Mandatory};
    for (int c = 0; c < num_cells(); ++c)
      if (matrix(i, c) != 0.0) row.cells.push_back(c);
    rows.push_back(std::move(row));
  }
  auto out = make_plan(rows, cell_names);
  out.convention = convention;
  out.layout_hash = layout_hash;
  return out;
}

MeasurementPlan build_plan(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                           const ExtraPolicy& extra, MandatoryPolicy policy) {
  auto rows = build_mandatory(layout, cells, policy);
  auto extras = build_extra(layout, cells, rows, extra);
  rows.insert(rows.end(), extras.begin(), extras.end());
  std::vector<std::string> names;
  for (const auto& c : cells) names.push_back(cell_name(layout, c));
  auto plan = make_plan(rows, names);
  plan.layout_hash = layout_hash(layout);
  return plan;
}

Eigen::VectorXd simulate_measurements(const MeasurementPlan& plan, const Eigen::VectorXd& cell_values, double sigma,
                                      std::mt19937_64* rng) {
  if (cell_values.size() != plan.num_cells())
    throw std::invalid_argument("expected " + std::to_string(plan.num_cells()) + " cell values, got " +
                                std::to_string(cell_values.size()));
  Eigen::VectorXd m = plan.matrix * cell_values;
  if (sigma > 0.0) {
    if (!rng) throw std::invalid_argument("noise requested without a random generator");
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] += normal(*rng);
  } else if (sigma < 0.0) {
    throw std::invalid_argument("noise sigma must be non-negative");
  }
  return m;
}

DecodeResult decode(const MeasurementPlan& plan, const Eigen::VectorXd& measurements) {
  if (measurements.size() != plan.num_rows())
    throw std::invalid_argument("expected " + std::to_string(plan.num_rows()) + " measurements, got " +
                                std::to_string(measurements.size()));
  if (!measurements.allFinite()) throw std::domain_error("measurements contain non-finite values");
  DecodeResult out;
  out.cells = plan.pseudoinverse * measurements;
  out.residual = (plan.matrix * out.cells - measurements).norm();
  return out;
}

Eigen::MatrixXd decode_frames(const MeasurementPlan& plan, const Eigen::MatrixXd& measurements) {
  if (measurements.cols() != plan.num_rows())
    throw std::invalid_argument("expected " + std::to_string(plan.num_rows()) + " measurement columns, got " +
                                std::to_string(measurements.cols()));
  if (!measurements.allFinite()) throw std::domain_error("measurements contain non-finite values");
  return measurements * plan.pseudoinverse.transpose();
}

std::string plan_to_json(const MeasurementPlan& plan) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["layout_hash"] = hex64(plan.layout_hash);
  j["convention"] = plan.convention;
  j["cells"] = plan.cell_names;
  auto rows = nlohmann::ordered_json::array();
  for (int i = 0; i < plan.num_rows(); ++i) {
    nlohmann::ordered_json r;
    r["kind"] = plan.row_kind[static_cast<std::size_t>(i)] == RowKind::Mandatory ? "mandatory" : "extra";
    r["sources"] = plan.source_sets[static_cast<std::size_t>(i)];
    std::vector<int> ids;
    for (int c = 0; c < plan.num_cells(); ++c)
      if (plan.matrix(i, c) != 0.0) ids.push_back(c);
    r["cells"] = ids;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(1);
}

MeasurementPlan plan_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported plan version");
  std::vector<PlanRow> rows;
  for (const auto& r : j.at("rows")) {
    PlanRow row;
    const auto kind = r.at("kind").get<std::string>();
    if (kind != "mandatory" && kind != "extra") throw std::runtime_error("unknown plan row kind " + kind);
    row.kind = kind == "mandatory" ? RowKind::Mandatory : RowKind::Extra;
    row.sources = r.at("sources").get<std::vector<std::string>>();
    row.cells = r.at("cells").get<std::vector<int>>();
    rows.push_back(std::move(row));
  }
  auto plan = make_plan(rows, j.at("cells").get<std::vector<std::string>>());
  plan.convention = j.value("convention", "ratio");
  plan.layout_hash = std::stoull(j.at("layout_hash").get<std::string>(), nullptr, 16);
  return plan;
}

void save_plan(const std::filesystem::path& path, const MeasurementPlan& plan) {
  write_text_file_atomic(path, plan_to_json(plan));
}

MeasurementPlan load_plan(const std::filesystem::path& path) {
  try {
    return plan_from_json(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  }
}

void TimerConfig::validate() const {
  if (!(r1 > 0.0) || !(r2 > 0.0)) throw std::invalid_argument("timer resistances must be positive");
  if (!(parasitic >= 0.0)) throw std::invalid_argument("parasitic capacitance must be non-negative");
}

double frequency_to_capacitance(const TimerConfig& timer, double frequency_hz) {
  timer.validate();
  if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz))
    throw std::invalid_argument("frequency must be positive and finite");
  const double c = 1.0 / (frequency_hz * (timer.r1 + 2.0 * timer.r2) * std::log(2.0)) - timer.parasitic;
  if (!(c > 0.0))
    throw std::domain_error("capacitance " + format_double(c) +
                            " F after parasitic subtraction is not positive; check calibration");
  return c;
}

double capacitance_to_frequency(const TimerConfig& timer, double capacitance) {
  timer.validate();
  if (!(capacitance > 0.0)) throw std::invalid_argument("capacitance must be positive");
  return 1.0 / ((capacitance + timer.parasitic) * (timer.r1 + 2.0 * timer.r2) * std::log(2.0));
}

double frame_time(const TimerConfig& timer, const Eigen::VectorXd& row_capacitance, double cycles) {
  timer.validate();
  if (!(cycles > 0.0)) throw std::invalid_argument("cycles must be positive");
  double total = 0.0;
  for (Eigen::Index i = 0; i < row_capacitance.size(); ++i)
    total += cycles / capacitance_to_frequency(timer, row_capacitance[i]);
  return total;
}

FrameTable frequencies_to_measurements(const FrameTable& raw, const TimerConfig& timer) {
  FrameTable out;
  out.frames = raw.frames;
  out.values.resize(raw.values.rows(), raw.values.cols());
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    std::string name = raw.columns[c];
    const std::string suffix = "_freq_hz";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      name = name.substr(0, name.size() - suffix.size());
    out.columns.push_back(name);
  }
  for (Eigen::Index r = 0; r < raw.values.rows(); ++r)
    for (Eigen::Index c = 0; c < raw.values.cols(); ++c)
      out.values(r, c) = std::isfinite(raw.values(r, c)) ? frequency_to_capacitance(timer, raw.values(r, c))
                                                         : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace stretchcap
