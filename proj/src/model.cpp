#include "choicectx/model.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace choicectx {

using nlohmann::json;

std::string kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::mnl: return "mnl";
        case ModelKind::lcl: return "lcl";
        case ModelKind::mixed_logit: return "mixed_logit";
        case ModelKind::dlcl: return "dlcl";
    }
    throw std::logic_error("unreachable");
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "mnl") return ModelKind::mnl;
    if (name == "lcl") return ModelKind::lcl;
    if (name == "mixed_logit" || name == "mixed") return ModelKind::mixed_logit;
    if (name == "dlcl") return ModelKind::dlcl;
    throw DataError("unknown model kind: " + name);
}

namespace {

Vector softmax(const Vector& v) {
    Vector e = (v.array() - v.maxCoeff()).exp();
    return e / e.sum();
}

Vector log_softmax(const Vector& v) {
    const double m = v.maxCoeff();
    const double lse = m + std::log((v.array() - m).exp().sum());
    return v.array() - lse;
}

double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

void check_finite_utilities(const Vector& u) {
    if (!u.allFinite()) throw DataError("non-finite utility");
}

}  // namespace

Vector Model::mixture_weights() const { return softmax(mix_logits); }

int Model::n_params() const {
    switch (kind) {
        case ModelKind::mnl: return d;
        case ModelKind::lcl: return d + d * d;
        case ModelKind::mixed_logit: return d * n_components + n_components;
        case ModelKind::dlcl: return 2 * d * d + d;
    }
    throw std::logic_error("unreachable");
}

Vector Model::flatten() const {
    Vector flat(n_params());
    switch (kind) {
        case ModelKind::mnl:
            flat = theta;
            break;
        case ModelKind::lcl:
            flat.head(d) = theta;
            flat.tail(d * d) = Eigen::Map<const Vector>(A.data(), d * d);
            break;
        case ModelKind::mixed_logit:
            flat.head(d * n_components) = Eigen::Map<const Vector>(B.data(), d * n_components);
            flat.tail(n_components) = mix_logits;
            break;
        case ModelKind::dlcl:
            flat.segment(0, d * d) = Eigen::Map<const Vector>(A.data(), d * d);
            flat.segment(d * d, d * d) = Eigen::Map<const Vector>(B.data(), d * d);
            flat.tail(d) = mix_logits;
            break;
    }
    return flat;
}

void Model::unflatten(const Vector& flat) {
    if (flat.size() != n_params()) throw DataError("unflatten: size mismatch");
    switch (kind) {
        case ModelKind::mnl:
            theta = flat;
            break;
        case ModelKind::lcl:
            theta = flat.head(d);
            A = Eigen::Map<const Matrix>(flat.data() + d, d, d);
            break;
        case ModelKind::mixed_logit:
            B = Eigen::Map<const Matrix>(flat.data(), d, n_components);
            mix_logits = flat.tail(n_components);
            break;
        case ModelKind::dlcl:
            A = Eigen::Map<const Matrix>(flat.data(), d, d);
            B = Eigen::Map<const Matrix>(flat.data() + d * d, d, d);
            mix_logits = flat.tail(d);
            break;
    }
}

std::pair<int, int> Model::a_block() const {
    switch (kind) {
        case ModelKind::lcl: return {d, d * d};
        case ModelKind::dlcl: return {0, d * d};
        default: return {0, 0};
    }
}

Model Model::zeros(ModelKind kind, int d, int n_components) {
    Model m;
    m.kind = kind;
    m.d = d;
    switch (kind) {
        case ModelKind::mnl:
            m.theta = Vector::Zero(d);
            break;
        case ModelKind::lcl:
            m.theta = Vector::Zero(d);
            m.A = Matrix::Zero(d, d);
            break;
        case ModelKind::mixed_logit:
            m.n_components = n_components > 0 ? n_components : d;
            m.B = Matrix::Zero(d, m.n_components);
            m.mix_logits = Vector::Zero(m.n_components);
            break;
        case ModelKind::dlcl:
            m.n_components = d;
            m.A = Matrix::Zero(d, d);
            m.B = Matrix::Zero(d, d);
            m.mix_logits = Vector::Zero(d);
            break;
    }
    return m;
}

Vector context_adjusted_preferences(const Vector& theta, const Matrix& A, const Vector& x_C) {
    if (A.rows() != theta.size() || A.cols() != x_C.size())
        throw DataError("context_adjusted_preferences: dimension mismatch");
    return theta + A * x_C;
}

Vector log_choice_probabilities(const Model& model, const Matrix& choice_set) {
    const int k = static_cast<int>(choice_set.rows());
    if (k == 0) throw DataError("empty choice set");
    if (choice_set.cols() != model.d) throw DataError("choice set dimension mismatch");

    switch (model.kind) {
        case ModelKind::mnl: {
            Vector u = choice_set * model.theta;
            check_finite_utilities(u);
            return log_softmax(u);
        }
        case ModelKind::lcl: {
            const Vector x_C = choice_set.colwise().mean().transpose();
            Vector u = choice_set * (model.theta + model.A * x_C);
            check_finite_utilities(u);
            return log_softmax(u);
        }
        case ModelKind::mixed_logit:
        case ModelKind::dlcl: {
            const int M = model.n_components;
            const Vector log_pi = model.mix_logits.array() - log_sum_exp(model.mix_logits);
            const Vector x_C = choice_set.colwise().mean().transpose();
            Matrix comp_lp(k, M);  // per-component log-probabilities
            for (int m = 0; m < M; ++m) {
                Vector prefs = model.kind == ModelKind::mixed_logit
                                   ? Vector(model.B.col(m))
                                   : Vector(model.B.col(m) + model.A.col(m) * x_C[m]);
                Vector u = choice_set * prefs;
                check_finite_utilities(u);
                comp_lp.col(m) = log_softmax(u);
            }
            Vector out(k);
            for (int i = 0; i < k; ++i)
                out[i] = log_sum_exp(comp_lp.row(i).transpose() + log_pi);
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

Vector choice_probabilities(const Model& model, const Matrix& choice_set) {
    return log_choice_probabilities(model, choice_set).array().exp();
}

Vector log_probability_ratios(const Model& model, const Matrix& choice_set) {
    Vector lp = log_choice_probabilities(model, choice_set);
    return lp.array() - lp.mean();
}

namespace {

// Contribution of one observation to the NLL and flat-layout gradient.
void accumulate(const Model& model, const Observation& obs, double& nll, Vector& grad) {
    const int d = model.d;
    const Matrix& X = obs.items;
    const Vector x_i = obs.chosen_item();

    switch (model.kind) {
        case ModelKind::mnl: {
            Vector u = X * model.theta;
            check_finite_utilities(u);
            Vector lp = log_softmax(u);
            nll -= lp[obs.chosen];
            Vector p = lp.array().exp();
            grad.head(d) += X.transpose() * p - x_i;
            return;
        }
        case ModelKind::lcl: {
            const Vector x_C = obs.mean_item();
            Vector u = X * (model.theta + model.A * x_C);
            check_finite_utilities(u);
            Vector lp = log_softmax(u);
            nll -= lp[obs.chosen];
            Vector p = lp.array().exp();
            Vector resid = X.transpose() * p - x_i;
            grad.head(d) += resid;
            Eigen::Map<Matrix>(grad.data() + d, d, d) += resid * x_C.transpose();
            return;
        }
        case ModelKind::mixed_logit:
        case ModelKind::dlcl: {
            const int M = model.n_components;
            const bool dlcl = model.kind == ModelKind::dlcl;
            const Vector log_pi = model.mix_logits.array() - log_sum_exp(model.mix_logits);
            const Vector pi = log_pi.array().exp();
            const Vector x_C = obs.mean_item();

            Vector comp_chosen_lp(M);  // log P_m(chosen)
            Matrix expected(d, M);     // sum_j P_mj x_j per component
            for (int m = 0; m < M; ++m) {
                Vector prefs = dlcl ? Vector(model.B.col(m) + model.A.col(m) * x_C[m])
                                    : Vector(model.B.col(m));
                Vector u = X * prefs;
                check_finite_utilities(u);
                Vector lp = log_softmax(u);
                comp_chosen_lp[m] = lp[obs.chosen];
                expected.col(m) = X.transpose() * Vector(lp.array().exp());
            }
            const double log_lik = log_sum_exp(log_pi + comp_chosen_lp);
            nll -= log_lik;
            const Vector w = (log_pi + comp_chosen_lp).array().exp() / std::exp(log_lik);

            const int b_off = dlcl ? d * d : 0;
            const int logit_off = dlcl ? 2 * d * d : d * M;
            for (int m = 0; m < M; ++m) {
                Vector resid = w[m] * (expected.col(m) - x_i);
                grad.segment(b_off + m * d, d) += resid;
                if (dlcl) grad.segment(m * d, d) += resid * x_C[m];
            }
            grad.segment(logit_off, M) += pi - w;
            return;
        }
    }
}

}  // namespace

std::pair<double, Vector> nll_and_gradient(const Model& model, const ChoiceDataset& dataset,
                                           const std::vector<int>& indices) {
    double nll = 0.0;
    Vector grad = Vector::Zero(model.n_params());
    for (int idx : indices) accumulate(model, dataset.observations[idx], nll, grad);
    return {nll, grad};
}

std::pair<double, Vector> nll_and_gradient(const Model& model, const ChoiceDataset& dataset) {
    double nll = 0.0;
    Vector grad = Vector::Zero(model.n_params());
    for (const auto& obs : dataset.observations) accumulate(model, obs, nll, grad);
    return {nll, grad};
}

double negative_log_likelihood(const Model& model, const ChoiceDataset& dataset) {
    double nll = 0.0;
    for (const auto& obs : dataset.observations)
        nll -= log_choice_probabilities(model, obs.items)[obs.chosen];
    return nll;
}

Vector nll_gradient(const Model& model, const ChoiceDataset& dataset) {
    return nll_and_gradient(model, dataset).second;
}

namespace {

json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_rows(const json& rows) {
    const auto data = rows.get<std::vector<std::vector<double>>>();
    Matrix m(data.size(), data.empty() ? 0 : data[0].size());
    for (size_t r = 0; r < data.size(); ++r)
        for (size_t c = 0; c < data[r].size(); ++c) m(r, c) = data[r][c];
    return m;
}

}  // namespace

std::string model_to_json(const Model& model) {
    json j;
    j["kind"] = kind_name(model.kind);
    j["d"] = model.d;
    switch (model.kind) {
        case ModelKind::mnl:
            j["theta"] = std::vector<double>(model.theta.data(), model.theta.data() + model.d);
            break;
        case ModelKind::lcl:
            j["theta"] = std::vector<double>(model.theta.data(), model.theta.data() + model.d);
            j["A"] = matrix_rows(model.A);
            break;
        case ModelKind::mixed_logit: {
            j["B"] = matrix_rows(model.B);
            Vector pi = model.mixture_weights();
            j["pi"] = std::vector<double>(pi.data(), pi.data() + pi.size());
            break;
        }
        case ModelKind::dlcl: {
            j["A"] = matrix_rows(model.A);
            j["B"] = matrix_rows(model.B);
            Vector pi = model.mixture_weights();
            j["pi"] = std::vector<double>(pi.data(), pi.data() + pi.size());
            break;
        }
    }
    if (model.standardizer)
        j["standardizer"] = json::parse(standardizer_to_json(*model.standardizer));
    return j.dump(2);
}

Model model_from_json(const std::string& text) {
    json j = json::parse(text);
    // Accept CLI reports that wrap the model in a payload.
    if (j.contains("payload") && j["payload"].contains("model")) j = j["payload"]["model"];
    else if (j.contains("model") && !j.contains("kind")) j = j["model"];
    Model m;
    m.kind = kind_from_name(j.at("kind").get<std::string>());
    m.d = j.at("d").get<int>();
    auto vec = [](const json& arr) {
        auto v = arr.get<std::vector<double>>();
        return Eigen::Map<const Vector>(v.data(), v.size()).eval();
    };
    switch (m.kind) {
        case ModelKind::mnl:
            m.theta = vec(j.at("theta"));
            break;
        case ModelKind::lcl:
            m.theta = vec(j.at("theta"));
            m.A = matrix_from_rows(j.at("A"));
            break;
        case ModelKind::mixed_logit:
            m.B = matrix_from_rows(j.at("B"));
            m.n_components = static_cast<int>(m.B.cols());
            m.mix_logits = vec(j.at("pi")).array().max(1e-300).log();
            break;
        case ModelKind::dlcl:
            m.A = matrix_from_rows(j.at("A"));
            m.B = matrix_from_rows(j.at("B"));
            m.n_components = m.d;
            m.mix_logits = vec(j.at("pi")).array().max(1e-300).log();
            break;
    }
    if (j.contains("standardizer"))
        m.standardizer = standardizer_from_json(j.at("standardizer").dump());
    return m;
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << model_to_json(model) << "\n";
}

}  // namespace choicectx
