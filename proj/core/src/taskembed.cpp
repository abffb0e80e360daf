#include "slrl/taskembed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace slrl::embed {

std::string_view kind_name(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::OneHot:
      return "onehot";
    case EmbeddingKind::Sine:
      return "sine";
    case EmbeddingKind::Learned:
      return "learned";
  }
  return "unknown";
}

EmbeddingKind parse_kind(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "onehot" || s == "one-hot") return EmbeddingKind::OneHot;
  if (s == "sine") return EmbeddingKind::Sine;
  if (s == "learned") return EmbeddingKind::Learned;
  throw ConfigError("unknown embedding kind '" + std::string(text) + "' (expected onehot|sine|learned)");
}

EmbeddingTable::EmbeddingTable(EmbeddingKind kind)
    : kind_(kind), learned_(Eigen::MatrixXd::Identity(kNumTasks, kNumTasks)) {}

Eigen::VectorXd sine_code(int task_index, int m) {
  Eigen::VectorXd z(m);
  const double k = static_cast<double>(task_index + 1);
  for (int j = 0; j < m; ++j) z(j) = std::sin(static_cast<double>(j + 1) * k);
  return z;
}

TaskCode EmbeddingTable::embed(int task_index) const {
  if (task_index < 0 || task_index >= kNumTasks) {
    throw ConfigError("task index " + std::to_string(task_index) + " out of range for embedding");
  }
  switch (kind_) {
    case EmbeddingKind::OneHot:
      return TaskCode::Unit(task_index);
    case EmbeddingKind::Sine:
      return sine_code(task_index, kNumTasks);
    case EmbeddingKind::Learned:
      return learned_.col(task_index);
  }
  return TaskCode::Zero();
}

Eigen::MatrixXd EmbeddingTable::code_matrix() const {
  Eigen::MatrixXd codes(kNumTasks, kNumTasks);
  for (int k = 0; k < kNumTasks; ++k) codes.col(k) = embed(k);
  return codes;
}

EmbeddingTable EmbeddingTable::from_code_matrix(EmbeddingKind kind, const Eigen::MatrixXd& codes) {
  if (codes.rows() != kNumTasks || codes.cols() != kNumTasks) throw ConfigError("embedding matrix must be 7x7");
  EmbeddingTable t(kind);
  if (kind == EmbeddingKind::Learned) t.learned_ = codes;
  return t;
}

Eigen::MatrixXd EmbeddingTable::accumulate_gradient(std::span<const env::TaskId> tasks,
                                                    const Eigen::MatrixXd& code_gradients) const {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(kNumTasks, kNumTasks);
  if (kind_ != EmbeddingKind::Learned) return grad;
  if (code_gradients.rows() != kNumTasks || static_cast<std::size_t>(code_gradients.cols()) != tasks.size()) {
    throw ConfigError("embedding gradient shape mismatch");
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    grad.col(env::task_index(tasks[i])) += code_gradients.col(static_cast<Eigen::Index>(i));
  }
  return grad;
}

EmbeddedObservation concat_obs(const env::Observation& obs, const TaskCode& z) {
  EmbeddedObservation out{};
  std::copy(obs.begin(), obs.end(), out.begin());
  for (int j = 0; j < kNumTasks; ++j) out[static_cast<std::size_t>(kObsDim + j)] = z(j);
  return out;
}

std::pair<env::Observation, TaskCode> split_obs(const EmbeddedObservation& embedded) {
  env::Observation obs{};
  std::copy(embedded.begin(), embedded.begin() + kObsDim, obs.begin());
  TaskCode z;
  for (int j = 0; j < kNumTasks; ++j) z(j) = embedded[static_cast<std::size_t>(kObsDim + j)];
  return {obs, z};
}

}  // namespace slrl::embed
