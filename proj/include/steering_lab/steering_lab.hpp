#ifndef STEERING_LAB_STEERING_LAB_HPP
#define STEERING_LAB_STEERING_LAB_HPP

#include "steering_lab/analysis.hpp"
#include "steering_lab/errors.hpp"
#include "steering_lab/fock_ops.hpp"
#include "steering_lab/inequality.hpp"
#include "steering_lab/lhs_certification.hpp"
#include "steering_lab/nelder_mead.hpp"
#include "steering_lab/parallel.hpp"
#include "steering_lab/probability_table.hpp"
#include "steering_lab/quantum_model.hpp"
#include "steering_lab/random.hpp"
#include "steering_lab/strategies.hpp"

#endif  // STEERING_LAB_STEERING_LAB_HPP
