#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "setctl/reach.hpp"

namespace setctl {

struct MeasurementRecord {
  double t = 0;
  std::vector<double> y, dy;  // dy: half-widths, >= 0
};

// Checks dy >= 0, equal sizes and strictly increasing times.
void validate_measurements(const std::vector<MeasurementRecord>& data);
std::vector<MeasurementRecord> read_measurements(std::istream& is);  // t, y_1..y_m, dy_1..dy_m
void write_measurements(std::ostream& os, const std::vector<MeasurementRecord>& data);

enum class BoxStatus { Undecided, Feasible, Infeasible };
const char* to_string(BoxStatus s);

struct ParamBox {
  IntervalVector box;
  BoxStatus status = BoxStatus::Undecided;
  bool warning = false;  // classification hit an integration failure
};

enum class BisectRule { WidestRelative, Sensitivity };

// Zero-order-hold input: values[k] applies on [times[k], times[k+1]).
struct InputSignal {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::vector<double> at(double t) const;
  bool empty() const noexcept { return times.empty(); }
};

struct IdentConfig {
  double min_box_width = 1e-3;
  int max_boxes = 100000;
  BisectRule bisect_rule = BisectRule::WidestRelative;
  NonlinearSystemModel model;
  std::vector<Expr> outputs;  // over states ∥ inputs ∥ parameters
  IntervalVector x0;
  InputSignal input;
  double dt = 1e-2;      // nominal validated-integration step
  double t0 = 0.0;       // initial time of x0
  int workers = 1;       // parallel classification threads in sivia_identify
  bool early_abort = true;
  int shave_slices = 8;  // parameter-shaving resolution in predictor_corrector_run (0 disables)
};

void validate(const IdentConfig& cfg);

struct Classification {
  BoxStatus status = BoxStatus::Undecided;
  bool warning = false;
};

Classification classify_box(const IntervalVector& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data);

struct SiviaResult {
  std::vector<ParamBox> feasible, undecided, infeasible;
  bool incomplete = false;  // max_boxes reached before the queue drained
  int classifications = 0;

  void write_csv(std::ostream& os) const;  // status, p1_lo, p1_hi, ...
};

SiviaResult sivia_identify(const IntervalVector& p0, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data);

int sensitivity_bisect_dim(const IntervalVector& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data);

// Worst-case mismatch max_{k,i} |y_i(t_k; p) - y_m,i,k| of the point model
// started at mid(x0) (RK4 with cfg.dt).
double output_mismatch(const std::vector<double>& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data);

class ModelInconsistency : public std::runtime_error {
 public:
  ModelInconsistency(std::size_t k, const std::string& what)
      : std::runtime_error(what + " (measurement index " + std::to_string(k) + ")"), k_(k) {}
  std::size_t index() const noexcept { return k_; }

 private:
  std::size_t k_;
};

struct PredictorCorrectorResult {
  std::vector<double> times;            // t0, t_1, ..., t_K
  std::vector<IntervalVector> states;   // corrected state boxes at those times
  std::vector<IntervalVector> params;   // parameter box after each correction
  IntervalVector param_box;             // final
};

PredictorCorrectorResult predictor_corrector_run(const IntervalVector& p0, const IdentConfig& cfg,
                                                 const std::vector<MeasurementRecord>& data);

}  // namespace setctl
