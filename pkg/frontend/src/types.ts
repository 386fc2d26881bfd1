// Wire types mirroring the backend's canonical JSON schemas.

export type InteractionType =
  | "none"
  | "tap"
  | "drag"
  | "choice"
  | "mimic"
  | "record_voice";

export interface Interaction {
  type: InteractionType;
  instruction: string;
  event_key: string | null;
  ext: { encouragement: string };
}

export interface BranchChoice {
  choice_id: string;
  label_cn: string;
  next_page_id: string;
}

export interface Page {
  page_no: number;
  page_id: string;
  page_text_cn: string;
  next_page_id: string | null;
  interaction: Interaction | null;
  branch_choices: BranchChoice[];
}

export interface VisualCanon {
  global_visual_prompt_prefix_en: string;
  character_lock_prompt_en: string;
  world_lock_prompt_en: string;
  negative_prompt_en: string;
}

export interface PagePromptPackage {
  page_no: number;
  page_id: string;
  image_prompt_suffix_en: string;
}

export interface Episode {
  episode_id: string;
  pages: Page[];
  visual_canon: VisualCanon;
  page_image_prompt_packages: PagePromptPackage[];
  target_food: string;
  framework_id: string;
  kind: "main" | "ending_extension";
}

/** GET /sessions/{id}/episode and /ending payload. */
export interface EpisodeView {
  episode: Episode;
  page_images: Record<string, string>;
  page_audio: Record<string, string>;
  session_state: string;
}

export type SessionState =
  | "FoodSelected"
  | "StoryGenerating"
  | "ReviewPending"
  | "StoryReady"
  | "ReadDone"
  | "PostMealRecorded"
  | "FeedbackDelivered"
  | "EndingReady"
  | "Revisited";

export interface Session {
  session_id: string;
  child_id: string;
  target_food: string;
  state: SessionState;
  main_episode_id: string | null;
  ending_episode_id: string | null;
  record_id: string | null;
  regeneration_count: number;
  real_world_task_done: boolean;
  created_at: number;
  updated_at: number;
}

export interface Avatar {
  avatar_id: string;
  nickname: string;
  gender: "girl" | "boy" | "unspecified";
  clothing: string;
  accessories: string[];
  base_reference_image: string | null;
}

export interface Job {
  job_id: string;
  stage: string;
  status: "queued" | "running" | "awaiting_review" | "succeeded" | "failed";
  attempts: number;
  error: string | null;
  result: Record<string, unknown> | null;
}

export type InteractionKind =
  | "tap"
  | "drag"
  | "choice_selected"
  | "mimic_done"
  | "voice_recorded";

export interface InteractionEventBody {
  page_id: string;
  event_key: string;
  kind: InteractionKind;
  choice_branch?: string | null;
  audio_asset?: string | null;
}

export interface FeedbackView {
  feedback: { text_cn: string; basic_type: "praise" | "encourage"; record_id: string };
  avatar_state: "happy" | "neutral" | "sad-but-hopeful";
  session_state: string;
}

export interface PostMealInput {
  target_food: string;
  baseline_try: number;
  try_level: number;
  intake: number;
  resistance: number;
  emotion: number;
  parent_pressure: number;
  helpfulness: number;
  self_rating: number;
  self_description: string;
  special_circumstances: string[];
  task_completed: boolean;
}
