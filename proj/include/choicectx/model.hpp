#pragma once

#include <optional>
#include <string>

#include "choicectx/dataset.hpp"
#include "choicectx/standardize.hpp"

namespace choicectx {

enum class ModelKind { mnl, lcl, mixed_logit, dlcl };

std::string kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

/// Parameters for any of the four model kinds. Fields unused by a kind
/// stay empty. Mixture weights are kept as unconstrained logits and
/// materialized via softmax.
struct Model {
    ModelKind kind = ModelKind::mnl;
    int d = 0;
    int n_components = 0;  // mixed_logit: M; dlcl: d; otherwise 0

    Vector theta;       // mnl, lcl: base preferences (d)
    Matrix A;           // lcl, dlcl: context effect matrix (d x d)
    Matrix B;           // mixed_logit: component preferences (d x M); dlcl: intercepts (d x d)
    Vector mix_logits;  // mixed_logit (M), dlcl (d)

    std::optional<Standardizer> standardizer;  // transform the model was fit under

    Vector mixture_weights() const;  // softmax(mix_logits)
    int n_params() const;

    // Flat layouts, used by the optimizer:
    //   mnl:   [theta]
    //   lcl:   [theta; vec(A)]
    //   mixed: [vec(B); mix_logits]
    //   dlcl:  [vec(A); vec(B); mix_logits]
    // vec() stacks columns.
    Vector flatten() const;
    void unflatten(const Vector& flat);

    // [offset, offset+count) of vec(A) within the flat layout; count 0 for
    // kinds without A.
    std::pair<int, int> a_block() const;

    static Model zeros(ModelKind kind, int d, int n_components = 0);
};

/// theta + A * x_C: the context-adjusted preference vector.
Vector context_adjusted_preferences(const Vector& theta, const Matrix& A, const Vector& x_C);

// Per-item log choice probabilities over the rows of `choice_set`.
// All softmaxes are max-subtracted; mixtures combine per-component
// log-probabilities with log-sum-exp.
Vector log_choice_probabilities(const Model& model, const Matrix& choice_set);
Vector choice_probabilities(const Model& model, const Matrix& choice_set);

double negative_log_likelihood(const Model& model, const ChoiceDataset& dataset);

/// Analytic gradient of the NLL in the model's flat layout. Mixture
/// gradients are taken with respect to the unconstrained logits.
Vector nll_gradient(const Model& model, const ChoiceDataset& dataset);

// Both at once; cheaper than separate calls during training.
std::pair<double, Vector> nll_and_gradient(const Model& model, const ChoiceDataset& dataset);
// Restricted to a subset of observation indices (minibatch); NLL is the
// sum over those observations.
std::pair<double, Vector> nll_and_gradient(const Model& model, const ChoiceDataset& dataset,
                                           const std::vector<int>& indices);

/// Log probability ratios beta_i = log(P(i) / geometric mean of P(j)).
/// softmax(beta) recovers the probabilities.
Vector log_probability_ratios(const Model& model, const Matrix& choice_set);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
Model load_model(const std::string& path);
void save_model(const Model& model, const std::string& path);

}  // namespace choicectx
