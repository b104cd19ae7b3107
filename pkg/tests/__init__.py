# Test module