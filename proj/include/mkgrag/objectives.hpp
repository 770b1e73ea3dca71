#pragma once
#include <optional>

#include <Eigen/Core>

namespace mkgrag::objectives {

// Row i of evidences is the positive for row i of queries.
struct BatchEmbeddings {
  Eigen::MatrixXd queries;                      // B x D
  Eigen::MatrixXd evidences;                    // B x D
  std::optional<Eigen::MatrixXd> declaratives;  // B x D
  double temperature = 0.07;
  double alpha = 2.0;

  Eigen::Index batch_size() const { return queries.rows(); }
  void validate() const;
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// In-batch contrastive loss for one row: -log softmax over cosine
// similarities to the batch evidences at the given temperature,
// max-stabilized.
double infonce_loss(const BatchEmbeddings& batch, Eigen::Index row);
double mean_infonce(const BatchEmbeddings& batch);

// KL(softmax(p_logits) || softmax(q_logits)).
double kl_divergence(const Eigen::VectorXd& p_logits, const Eigen::VectorXd& q_logits);

// mean infonce + alpha * mean per-row KL between the evidence-similarity
// distributions induced by queries and declaratives.
double combined_objective(const BatchEmbeddings& batch);

// Batch file: ASCII header "dim B tau alpha has_declaratives" then row-major
// float32 matrices (queries, evidences, declaratives if present), little
// endian.
void save_batch(const BatchEmbeddings& batch, const std::string& path);
BatchEmbeddings load_batch(const std::string& path);

}  // namespace mkgrag::objectives
