use crate::error::{Error, Result};
use crate::numcore::{cross_entropy, log_softmax, nll_of_index, soft_cross_entropy, softmax, Graph, Tensor, Var};

/// Distillation loss on raw logits:
/// `CE(softmax(teacher/T), log_softmax(student/T)) + β · CE(onehot(gold), log_softmax(student))`.
pub fn kd_loss(
    student_logits: &[f64],
    teacher_logits: &[f64],
    gold: usize,
    temperature: f64,
    beta: f64,
) -> Result<f64> {
    if student_logits.len() != teacher_logits.len() {
        return Err(Error::Contract(format!(
            "{} student logits vs {} teacher logits",
            student_logits.len(),
            teacher_logits.len()
        )));
    }
    let target = softmax(&Tensor::vector(teacher_logits.to_vec()), temperature)?;
    kd_loss_with_target(student_logits, target.data(), gold, temperature, beta)
}

/// [`kd_loss`] with the teacher's soft distribution given directly.
pub fn kd_loss_with_target(
    student_logits: &[f64],
    target: &[f64],
    gold: usize,
    temperature: f64,
    beta: f64,
) -> Result<f64> {
    if student_logits.len() != target.len() {
        return Err(Error::Contract(format!(
            "{} student logits vs {} target probabilities",
            student_logits.len(),
            target.len()
        )));
    }
    if gold >= student_logits.len() {
        return Err(Error::Contract(format!("gold index {gold} out of range")));
    }
    let s = Tensor::vector(student_logits.to_vec());
    let soft = cross_entropy(target, log_softmax(&s, temperature)?.data())?;
    let hard = -log_softmax(&s, 1.0)?.data()[gold];
    Ok(soft + beta * hard)
}

/// Graph form over a `1×m` student logit row with a constant target.
pub fn kd_loss_graph(
    g: &mut Graph,
    student_logits: Var,
    target: &[f64],
    gold: usize,
    temperature: f64,
    beta: f64,
    t2_scaling: bool,
) -> Result<Var> {
    let m = g.value(student_logits).len();
    if target.len() != m {
        return Err(Error::Contract(format!(
            "{m} student logits vs {} target probabilities",
            target.len()
        )));
    }
    let mut soft = soft_cross_entropy(g, student_logits, target, temperature)?;
    if t2_scaling {
        soft = g.scale(soft, temperature * temperature);
    }
    if beta == 0.0 {
        return Ok(soft);
    }
    let hard = nll_of_index(g, student_logits, gold, 1.0)?;
    let hard = g.scale(hard, beta);
    g.add(soft, hard)
}
