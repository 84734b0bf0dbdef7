use std::io::{BufRead, Write};

use flightpref::domain::{Flight, RewardVector};
use flightpref::game::{ActionResult, AssistantAction, GameState, Outcome, Phase, Session, UtteranceReason};
use flightpref::lang::FeatureRef;
use flightpref::pragmatics::Pragmatics;

fn flight_line(i: usize, f: &Flight) -> String {
    format!(
        "  [{i}] {:<10} price {:.2}  stops {:.1}  longest stop {:.2}  arrival slack {:.2}",
        f.carrier.to_string(),
        f.price_norm,
        f.stops_norm,
        f.longest_stop_norm,
        f.arrival_slack_norm
    )
}

fn reward_line(theta: &RewardVector) -> String {
    FeatureRef::ALL
        .iter()
        .zip(theta.weights())
        .map(|(f, w)| format!("{f} {w:+.1}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn report_action(r: &ActionResult, out: &mut dyn Write) -> std::io::Result<()> {
    match (r.action, r.outcome) {
        (AssistantAction::Chose(i), Outcome::Correct) => writeln!(out, "assistant books flight {i}: correct ({:+})", r.points_delta),
        (AssistantAction::Chose(i), _) => writeln!(out, "assistant books flight {i}: wrong ({:+})", r.points_delta),
        (AssistantAction::Asked, _) => writeln!(out, "assistant asks for more ({:+})", r.points_delta),
    }
}

/// Prints round `index` once, with the score as it stood when the round began.
fn show_round(state: &GameState, index: usize, shown: &mut Option<usize>, out: &mut dyn Write) -> std::io::Result<()> {
    if *shown == Some(index) {
        return Ok(());
    }
    let earlier: i64 = state.rounds[..index].iter().map(|r| r.points_delta).sum();
    writeln!(out, "\nround {} (score {earlier})", index + 1)?;
    for (i, f) in state.rounds[index].options.flights().iter().enumerate() {
        writeln!(out, "{}", flight_line(i, f))?;
    }
    *shown = Some(index);
    Ok(())
}

/// Runs a session as the user, one utterance per input line. Stops at the
/// end of the game, on "quit", or at end of input.
pub fn play(session: &mut Session, engine: &Pragmatics, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(out, "your preferences: {}", reward_line(&session.state().theta_star))?;
    let mut shown_round = None;
    loop {
        let state = session.state();
        match state.phase {
            Phase::Finished => break,
            Phase::AwaitingAssistant => {
                show_round(state, state.round_index, &mut shown_round, out)?;
                let r = session.assistant_action()?;
                report_action(&r, out)?;
                continue;
            }
            Phase::AwaitingUtterance(reason) => {
                show_round(state, state.round_index, &mut shown_round, out)?;
                let prompt = match reason {
                    UtteranceReason::Initial => "describe what you want",
                    UtteranceReason::AfterAsk => "the assistant is unsure, say more",
                    UtteranceReason::AfterIncorrect => "that was wrong, say more",
                };
                write!(out, "{prompt}> ")?;
                out.flush()?;
            }
        }
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            break;
        }
        let text = line.trim();
        if text == "quit" {
            break;
        }
        if text.is_empty() {
            continue;
        }
        let before = session.state().round_index;
        let closes_round = session.state().phase != Phase::AwaitingUtterance(UtteranceReason::Initial);
        let resp = session.submit_utterance(text, engine)?;
        if let Some(r) = &resp.assistant {
            let acted = if closes_round { before + 1 } else { before };
            show_round(&resp.state, acted, &mut shown_round, out)?;
            report_action(r, out)?;
        }
    }
    let state = session.state();
    writeln!(out, "final score {} after {} rounds", state.score, state.rounds.len())?;
    Ok(())
}
