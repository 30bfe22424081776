mod common;

use common::goldens::{
    check_codazzi, check_gauss, check_second_order_local, check_second_order_single_nonlocal, half_square_tv,
};

#[test]
fn second_order_local_coefficient() {
    check_second_order_local(&half_square_tv()).unwrap();
}

#[test]
fn second_order_single_nonlocal_coefficient() {
    check_second_order_single_nonlocal(&half_square_tv()).unwrap();
}

#[test]
fn codazzi_type_coefficient() {
    check_codazzi(&half_square_tv()).unwrap();
}

#[test]
fn gauss_type_coefficient_modulo_tail_symmetry_and_skewness() {
    check_gauss(&half_square_tv()).unwrap();
}
