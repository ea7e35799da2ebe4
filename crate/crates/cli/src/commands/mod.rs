pub mod eval;
pub mod grad_check;
pub mod involution_check;
pub mod layout;
pub mod loss_eval;
pub mod sim;
