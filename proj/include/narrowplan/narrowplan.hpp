#pragma once

#include <narrowplan/agd.hpp>
#include <narrowplan/common.hpp>
#include <narrowplan/environment.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/isago.hpp>
#include <narrowplan/kinematics.hpp>
#include <narrowplan/objective.hpp>
#include <narrowplan/problem.hpp>
#include <narrowplan/stoma.hpp>
