#pragma once

#include <Eigen/Dense>

#include <array>
#include <string_view>
#include <utility>

#include "slrl/common.hpp"
#include "slrl/envsuite.hpp"

namespace slrl::embed {

enum class EmbeddingKind : std::uint8_t { OneHot = 0, Sine = 1, Learned = 2 };

std::string_view kind_name(EmbeddingKind kind);  // "onehot" | "sine" | "learned"
EmbeddingKind parse_kind(std::string_view text);

using TaskCode = Eigen::Matrix<double, kNumTasks, 1>;
using EmbeddedObservation = std::array<double, kEmbeddedObsDim>;

/// Task codes z for the seven tasks. Only the Learned kind carries trainable state (M).
class EmbeddingTable {
 public:
  explicit EmbeddingTable(EmbeddingKind kind = EmbeddingKind::Sine);

  [[nodiscard]] EmbeddingKind kind() const { return kind_; }
  [[nodiscard]] int num_tasks() const { return kNumTasks; }

  /// OneHot: e_k. Sine: sin(j (k+1)) for j = 1..m. Learned: M e_k.
  [[nodiscard]] TaskCode embed(int task_index) const;
  [[nodiscard]] TaskCode embed(env::TaskId task) const { return embed(env::task_index(task)); }

  /// The m x m matrix whose column k is the code of task k.
  [[nodiscard]] Eigen::MatrixXd code_matrix() const;

  /// Trainable matrix M (identity at construction); meaningful for Learned only.
  [[nodiscard]] const Eigen::MatrixXd& learned_matrix() const { return learned_; }
  Eigen::MatrixXd& learned_matrix() { return learned_; }

  /// Restores a table from a persisted code matrix.
  static EmbeddingTable from_code_matrix(EmbeddingKind kind, const Eigen::MatrixXd& codes);

  /// dL/dM given dL/dz for a batch of (task, gradient) columns; zero for fixed kinds.
  [[nodiscard]] Eigen::MatrixXd accumulate_gradient(std::span<const env::TaskId> tasks,
                                                    const Eigen::MatrixXd& code_gradients) const;

 private:
  EmbeddingKind kind_;
  Eigen::MatrixXd learned_;
};

/// The sine code for 1-indexed task k' = task_index + 1 across m slots.
Eigen::VectorXd sine_code(int task_index, int m);

EmbeddedObservation concat_obs(const env::Observation& obs, const TaskCode& z);
std::pair<env::Observation, TaskCode> split_obs(const EmbeddedObservation& embedded);

}  // namespace slrl::embed
