use crate::case_io::parse_case;
use crate::pf::Network;

pub(crate) const CASE2: &str = include_str!("../../../cases/case2.m");
pub(crate) const CASE39: &str = include_str!("../../../cases/case39.m");

pub(crate) fn net2() -> Network {
    Network::new(parse_case(CASE2).unwrap()).unwrap()
}

pub(crate) fn net39() -> Network {
    Network::new(parse_case(CASE39).unwrap()).unwrap()
}
