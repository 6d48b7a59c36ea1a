#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hallu/corpus.hpp"

namespace hallu::test {

inline GroundTruth make_gt(std::string image, std::string patient,
                           std::initializer_list<std::pair<PathologyLabel, LabelState>> labels = {}) {
    GroundTruth gt;
    gt.image_id = std::move(image);
    gt.patient_id = std::move(patient);
    for (auto [l, s] : labels) gt.labels[l] = s;
    return gt;
}

inline EvalRecord make_rec(std::string id, std::string image, std::string model, std::string text,
                           QueryKind kind = QueryKind::OpenEnded,
                           std::optional<PathologyLabel> queried = std::nullopt) {
    EvalRecord r;
    r.record_id = std::move(id);
    r.image_id = std::move(image);
    r.model_id = std::move(model);
    r.response_text = std::move(text);
    r.query.kind = kind;
    r.query.queried_label = queried;
    return r;
}

constexpr auto P = LabelState::Positive;
constexpr auto U = LabelState::Uncertain;

}  // namespace hallu::test
