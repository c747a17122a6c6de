#![allow(dead_code)]

pub mod naive_book;
pub mod ppo;
