#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/io.hpp"
#include "stretchcap/mocap.hpp"

namespace stretchcap {

/// Frame-aligned input/target pairs. Targets are local-frame marker
/// positions laid out as x0,y0,z0,x1,... (mm).
struct Dataset {
  Eigen::MatrixXd inputs;   // K x s
  Eigen::MatrixXd targets;  // K x 3M
  std::vector<int> frames;  // source frame of each row
  std::vector<std::string> input_names;

  int size() const { return static_cast<int>(inputs.rows()); }
  Dataset rows(const std::vector<int>& indices) const;
};

/// Pairs the non-discarded frames of a labeled session with a capacitance
/// trace (frame,<cell>...). Throws on frame-count mismatch.
Dataset build_dataset(const LabeledSession& labeled, const FrameTable& capacitance);

/// First (1 - fraction) of the rows for training, the chronologically last
/// `fraction` for validation.
std::pair<Dataset, Dataset> split_chronological(const Dataset& data, double validation_fraction = 0.1);

/// Per-channel mean/variance of the training inputs. Channels whose variance
/// is below 1e-12 are reported dead and floored.
struct InputNormalization {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::vector<int> dead_channels;

  static InputNormalization fit(const Eigen::MatrixXd& inputs);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& inputs) const;
};

struct TrainOptions {
  std::vector<int> hidden = {2048, 2048, 2048, 1024};
  double learning_rate = 1e-4;
  int batch_size = 256;
  double lambda = 1e-5;
  int epochs = 200;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double train_loss, double val_loss)> progress;
};

/// Fully connected regressor. Every hidden block is linear -> ReLU ->
/// batch normalization; the last layer is linear. All parameters live in one
/// flat vector so that optimizers and gradient checks can treat them alike.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {inputs, hidden..., outputs}; uniform fan-in initialization.
  Mlp(std::vector<int> dims, std::uint64_t seed);

  const std::vector<int>& dims() const { return dims_; }
  int num_inputs() const { return dims_.front(); }
  int num_outputs() const { return dims_.back(); }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }

  /// Inference-mode forward pass on already-normalized inputs (rows = samples).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Training-mode objective (1/B) sum |y_hat - y|^2 + lambda |theta|^2 on one
  /// batch, with batch statistics in every normalization layer. Writes the
  /// gradient into `grad` when non-null and, if asked, folds the batch
  /// statistics into the running averages (momentum 0.1).
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda, Eigen::VectorXd* grad,
              bool update_running = false);

  std::vector<Eigen::VectorXd> running_mean, running_var;

 private:
  struct Offsets {
    Eigen::Index w, b, gamma, beta;
  };
  std::vector<int> dims_;
  std::vector<Offsets> offsets_;
  Eigen::VectorXd theta_;
};

struct Regressor {
  Mlp net;
  InputNormalization normalization;
  TrainOptions options;
  std::uint64_t layout_hash = 0;
  std::vector<std::string> input_names;

  /// Raw capacitance rows -> marker positions.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;
};

struct TrainResult {
  Regressor model;
  std::vector<double> train_loss;  // per epoch, mean objective over batches
  std::vector<double> val_loss;    // per epoch, mean squared error per frame
  int best_epoch = -1;
  bool diverged = false;
};

/// ADAM on the full objective; validation is the chronologically last
/// fraction of `data`. Returns the snapshot with the lowest validation loss.
TrainResult train(const Dataset& data, const TrainOptions& options);

/// Ridge regression on normalized inputs with an unpenalized intercept.
struct LinearModel {
  InputNormalization normalization;
  Eigen::MatrixXd weights;  // s x 3M
  Eigen::RowVectorXd intercept;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;
};

LinearModel train_linear_baseline(const Dataset& data, double alpha = 1e-9);

struct ErrorReport {
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  int samples = 0;                         // frames x markers
  std::vector<double> per_frame_max;       // one per row
  std::vector<double> per_marker_mean;
};

/// Euclidean error per marker and frame between predicted and true rows.
ErrorReport evaluate(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

struct FilterResult {
  Dataset data;
  int retained = 0;
  std::string warning;
};

/// Keeps the rows whose angle (computed from the target row) is below gamma
/// or above beta.
FilterResult angle_filter(const Dataset& data, const std::function<double(const Eigen::RowVectorXd&)>& angle_fn,
                          double gamma, double beta, int min_frames = 1);

/// Angle in degrees between the lines through markers (a0, a1) and (b0, b1).
double marker_line_angle(const Eigen::RowVectorXd& targets, int a0, int a1, int b0, int b1);

void save_regressor(const std::filesystem::path& path, const Regressor& model);
Regressor load_regressor(const std::filesystem::path& path);

}  // namespace stretchcap
