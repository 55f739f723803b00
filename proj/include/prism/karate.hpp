#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "prism/graph.hpp"

namespace prism {

struct LabelledGraph {
    Graph graph;
    Labels truth;
};

/// Zachary's karate club: 34 members, 78 friendships, and the two factions
/// after the split (0 = instructor's side, 1 = administrator's side).
/// Node labels are the 1-based member numbers of the original study.
inline LabelledGraph karate_club() {
    static constexpr std::array<std::pair<int, int>, 78> edges{{
        {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},   {0, 10},  {0, 11},
        {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},  {1, 2},   {1, 3},   {1, 7},   {1, 13},
        {1, 17},  {1, 19},  {1, 21},  {1, 30},  {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},
        {2, 28},  {2, 32},  {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
        {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33}, {15, 32}, {15, 33},
        {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32}, {22, 33}, {23, 25}, {23, 27}, {23, 29},
        {23, 32}, {23, 33}, {24, 25}, {24, 27}, {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31},
        {28, 33}, {29, 32}, {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33},
    }};
    static constexpr std::array<int, 34> faction{
        0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
    };

    Matrix w = Matrix::Zero(34, 34);
    for (const auto& [a, b] : edges) {
        w(a, b) = 1.0;
        w(b, a) = 1.0;
    }
    std::vector<std::string> labels;
    for (int i = 1; i <= 34; ++i) labels.push_back(std::to_string(i));
    return {Graph(std::move(labels), std::move(w)), Labels(faction.begin(), faction.end())};
}

} // namespace prism
