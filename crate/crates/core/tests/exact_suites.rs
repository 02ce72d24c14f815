mod common;

use common::{run_suite, CASES};

#[test]
fn product_formula() {
    run_suite(1, CASES, common::check_product_formula).unwrap();
}

#[test]
fn factorization_of_hyperplane_height() {
    run_suite(2, CASES, common::check_factorization).unwrap();
}

#[test]
fn closed_form_heights_match_local_products() {
    run_suite(3, CASES, common::check_place_by_place).unwrap();
}

#[test]
fn finite_heights_are_translation_invariant() {
    run_suite(4, CASES, common::check_translation).unwrap();
}

#[test]
fn plane_degeneration() {
    run_suite(5, CASES, common::check_degeneration).unwrap();
}

#[test]
fn anticanonical_closed_form() {
    run_suite(6, CASES, common::check_anticanonical_closed_form).unwrap();
}

#[test]
fn normalize_point_is_canonical() {
    run_suite(7, CASES, common::check_normalize).unwrap();
}
