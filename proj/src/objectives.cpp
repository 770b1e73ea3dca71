#include "mkgrag/objectives.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace mkgrag::objectives {

void BatchEmbeddings::validate() const {
  if (queries.rows() < 1) throw std::invalid_argument("batch size must be >= 1");
  if (temperature <= 0) throw std::invalid_argument("temperature must be > 0");
  if (evidences.rows() != queries.rows() || evidences.cols() != queries.cols())
    throw std::invalid_argument("queries/evidences shape mismatch");
  if (declaratives && (declaratives->rows() != queries.rows() ||
                       declaratives->cols() != queries.cols()))
    throw std::invalid_argument("declaratives shape mismatch");
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) throw std::invalid_argument("cosine: zero vector");
  return a.dot(b) / (na * nb);
}

namespace {

// Cosine similarities of one row vector against every evidence row, scaled
// by 1/tau.
Eigen::VectorXd scaled_sims(const Eigen::MatrixXd& evidences, const Eigen::VectorXd& v,
                            double tau) {
  Eigen::VectorXd sims(evidences.rows());
  for (Eigen::Index k = 0; k < evidences.rows(); ++k)
    sims[k] = cosine(v, evidences.row(k).transpose()) / tau;
  return sims;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  Eigen::VectorXd exps = shifted.array().exp();
  return exps / exps.sum();
}

double log_sum_exp(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

}  // namespace

double infonce_loss(const BatchEmbeddings& batch, Eigen::Index row) {
  batch.validate();
  if (row < 0 || row >= batch.batch_size())
    throw std::invalid_argument("row out of range");
  Eigen::VectorXd logits =
      scaled_sims(batch.evidences, batch.queries.row(row).transpose(), batch.temperature);
  return log_sum_exp(logits) - logits[row];
}

double mean_infonce(const BatchEmbeddings& batch) {
  batch.validate();
  double total = 0;
  for (Eigen::Index i = 0; i < batch.batch_size(); ++i) total += infonce_loss(batch, i);
  return total / static_cast<double>(batch.batch_size());
}

double kl_divergence(const Eigen::VectorXd& p_logits, const Eigen::VectorXd& q_logits) {
  if (p_logits.size() != q_logits.size())
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  Eigen::VectorXd p = softmax(p_logits);
  Eigen::VectorXd q = softmax(q_logits);
  double kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  return kl;
}

double combined_objective(const BatchEmbeddings& batch) {
  batch.validate();
  double loss = mean_infonce(batch);
  if (batch.alpha == 0) return loss;
  if (!batch.declaratives)
    throw std::invalid_argument("combined objective with alpha > 0 needs declaratives");
  double kl_total = 0;
  for (Eigen::Index i = 0; i < batch.batch_size(); ++i) {
    Eigen::VectorXd pq =
        scaled_sims(batch.evidences, batch.queries.row(i).transpose(), batch.temperature);
    Eigen::VectorXd ps =
        scaled_sims(batch.evidences, batch.declaratives->row(i).transpose(), batch.temperature);
    kl_total += kl_divergence(pq, ps);
  }
  return loss + batch.alpha * kl_total / static_cast<double>(batch.batch_size());
}

namespace {

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float v = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Eigen::MatrixXd read_matrix(std::ifstream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      float v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error("batch file truncated");
      m(i, j) = v;
    }
  return m;
}

}  // namespace

void save_batch(const BatchEmbeddings& batch, const std::string& path) {
  batch.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write batch file: " + path);
  out << batch.queries.cols() << " " << batch.batch_size() << " " << batch.temperature
      << " " << batch.alpha << " " << (batch.declaratives ? 1 : 0) << "\n";
  write_matrix(out, batch.queries);
  write_matrix(out, batch.evidences);
  if (batch.declaratives) write_matrix(out, *batch.declaratives);
}

BatchEmbeddings load_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read batch file: " + path);
  Eigen::Index dim, b;
  int has_declaratives;
  BatchEmbeddings batch;
  in >> dim >> b >> batch.temperature >> batch.alpha >> has_declaratives;
  in.ignore(1, '\n');
  batch.queries = read_matrix(in, b, dim);
  batch.evidences = read_matrix(in, b, dim);
  if (has_declaratives) batch.declaratives = read_matrix(in, b, dim);
  batch.validate();
  return batch;
}

}  // namespace mkgrag::objectives
